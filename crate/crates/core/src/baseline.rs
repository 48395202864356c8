//! The analytic "predefined path": head straight for the current target
//! estimate, then circle it counter-clockwise at a fixed radius so that
//! consecutive pings are spread evenly around the circumference.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::geometry::{meters_to_units, wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub radius_m: f64,
    /// Half-width of the band around the circle in which the controller
    /// counts as "arrived"; leaving twice this distance re-triggers transit.
    pub capture_band_m: f64,
}

impl BaselineConfig {
    /// Radius `sqrt(2) * depth` with a 10 m capture band.
    pub fn for_depth(depth_m: f64) -> Self {
        Self {
            radius_m: SQRT_2 * depth_m,
            capture_band_m: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m.is_finite() && self.radius_m > 0.0) {
            return Err(Error::Config(format!(
                "baseline radius must be > 0, got {}",
                self.radius_m
            )));
        }
        if !(self.capture_band_m.is_finite() && self.capture_band_m >= 0.0) {
            return Err(Error::Config("capture band must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Transit,
    Circle,
}

/// Stateful controller; one per environment.
#[derive(Debug, Clone)]
pub struct PredefinedPath {
    radius: f64,
    band: f64,
    step_len: f64,
    max_turn: f64,
    mode: Mode,
}

impl PredefinedPath {
    pub fn new(cfg: &BaselineConfig, env: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            radius: meters_to_units(cfg.radius_m),
            band: meters_to_units(cfg.capture_band_m),
            step_len: env.step_length(),
            max_turn: env.max_turn,
            mode: Mode::Transit,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn reset(&mut self) {
        self.mode = Mode::Transit;
    }

    /// Normalised yaw action in `[-1, 1]` for the current observation.
    pub fn action(&mut self, obs: &Observation) -> f64 {
        let p = obs.p;
        let centre = p - obs.d_hat;
        let r = obs.d_hat.norm();
        let heading = obs.v.heading();

        self.mode = match self.mode {
            Mode::Transit if r <= self.radius + self.band => Mode::Circle,
            Mode::Circle if r > self.radius + 2.0 * self.band => Mode::Transit,
            m => m,
        };

        let waypoint = match self.mode {
            Mode::Transit => centre,
            Mode::Circle => self.next_on_circle(p, centre, heading),
        };
        let desired = (waypoint - p).heading();
        let turn = wrap_angle(desired - heading).map_or(0.0, |a| a.radians());
        (turn / self.max_turn).clamp(-1.0, 1.0)
    }

    /// The next counter-clockwise point one step away on the circle, or the
    /// point one arc-step ahead when the circle is out of reach.
    fn next_on_circle(&self, p: Vec2, c: Vec2, heading: f64) -> Vec2 {
        let (big_r, l) = (self.radius, self.step_len);
        let rel = p - c;
        let d = rel.norm();
        if d > 0.0 && d >= (big_r - l).abs() && d <= big_r + l {
            let e = (c - p) * (1.0 / d);
            let a = (l * l - big_r * big_r + d * d) / (2.0 * d);
            let h = (l * l - a * a).max(0.0).sqrt();
            let perp = Vec2::new(-e.y, e.x);
            let x1 = p + e * a + perp * h;
            let x2 = p + e * a - perp * h;
            return if rel.cross(x1 - c) >= rel.cross(x2 - c) {
                x1
            } else {
                x2
            };
        }
        let theta = if d > 0.0 { rel.heading() } else { heading };
        c + Vec2::from_heading(theta + l / big_r) * big_r
    }
}

/// Single-shot form of the controller: evaluates one observation with the
/// given mode bit and returns the action and the updated mode.
pub fn baseline_action(
    obs: &Observation,
    cfg: &BaselineConfig,
    env: &EnvConfig,
    mode: Mode,
) -> Result<(f64, Mode)> {
    let mut c = PredefinedPath::new(cfg, env)?;
    c.mode = mode;
    let a = c.action(obs);
    Ok((a, c.mode))
}
