use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{mean, rms, std_dev};
use crate::env::{measure_range, TargetState};
use crate::error::{Error, Result};
use crate::estimator::{solve_ranges, Measurement};
use crate::geometry::{
    meters_to_units, stream_rng, units_to_meters, NoiseModel, SimRng, Stream, Vec2,
};
use crate::par::{map_indexed, Exec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub depth_m: f64,
    pub radii_m: Vec<f64>,
    /// Number of consecutive measurements fed to the estimator.
    pub window: usize,
    pub n_runs: usize,
    /// Distance travelled between pings.
    pub step_m: f64,
    pub noise_sigma_m: f64,
    pub noise_epsilon_frac: f64,
}

impl SweepConfig {
    pub fn new(depth_m: f64, radii_m: Vec<f64>, window: usize, n_runs: usize) -> Self {
        Self {
            depth_m,
            radii_m,
            window,
            n_runs,
            step_m: 30.0,
            noise_sigma_m: 1.0,
            noise_epsilon_frac: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii_m.is_empty() {
            return Err(Error::Config("radius list is empty".into()));
        }
        if let Some(r) = self.radii_m.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Config(format!("radius must be > 0, got {r}")));
        }
        if self.window < 3 {
            return Err(Error::Config("window must be >= 3".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be >= 1".into()));
        }
        if !(self.depth_m.is_finite() && self.depth_m >= 0.0) {
            return Err(Error::Config("depth must be >= 0".into()));
        }
        if !(self.step_m.is_finite() && self.step_m > 0.0) {
            return Err(Error::Config("step length must be > 0".into()));
        }
        NoiseModel::new(self.noise_sigma_m, self.noise_epsilon_frac).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius_m: f64,
    /// Root-mean-square of `|q_hat - q|` over valid runs.
    pub rmse_m: f64,
    pub mean_error_m: f64,
    pub sd_error_m: f64,
    pub n_valid: usize,
    pub n_runs: usize,
}

/// Single run: a perfect circle of the given radius around a target at the
/// origin, starting at a random phase, one ping per chord.
fn circle_run(cfg: &SweepConfig, radius: f64, rng: &mut SimRng) -> Option<f64> {
    let target = TargetState {
        q: Vec2::ZERO,
        depth: meters_to_units(cfg.depth_m),
    };
    let noise = NoiseModel::new(meters_to_units(cfg.noise_sigma_m), cfg.noise_epsilon_frac).ok()?;
    let step = meters_to_units(cfg.step_m);
    let chord_angle = 2.0 * (step / (2.0 * radius)).min(1.0).asin();
    let phase0 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut ms = Vec::with_capacity(cfg.window);
    for k in 0..cfg.window {
        let p = Vec2::from_heading(phase0 + k as f64 * chord_angle) * radius;
        if let Some(r) = measure_range(p, &target, &noise, rng) {
            ms.push(Measurement {
                p,
                range_p: r,
                step: k as u32,
            });
        }
    }
    let est = solve_ranges(ms).ok()?;
    est.valid.then(|| units_to_meters(est.q_hat.norm()))
}

/// Estimation error as a function of loop radius.
pub fn radius_sweep(cfg: &SweepConfig, seed: u64, exec: Exec) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let n = cfg.n_runs;
    let jobs = cfg.radii_m.len() * n;
    let errs = map_indexed(exec, jobs, |j| {
        let (ri, run) = (j / n, j % n);
        let mut rng = stream_rng(seed, Stream::Sweep, &[ri as u64, run as u64]);
        circle_run(cfg, meters_to_units(cfg.radii_m[ri]), &mut rng)
    });
    Ok(cfg
        .radii_m
        .iter()
        .zip(errs.chunks(n))
        .map(|(&radius_m, chunk)| {
            let valid: Vec<f64> = chunk.iter().flatten().copied().collect();
            let (rmse_m, mean_error_m, sd_error_m) = if valid.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (rms(&valid), mean(&valid), std_dev(&valid))
            };
            SweepRow {
                radius_m,
                rmse_m,
                mean_error_m,
                sd_error_m,
                n_valid: valid.len(),
                n_runs: n,
            }
        })
        .collect())
}

pub fn write_sweep_csv(path: &Path, window: usize, depth_m: f64, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "depth_m",
        "window",
        "radius_m",
        "rmse_m",
        "mean_error_m",
        "sd_error_m",
        "n_valid",
        "n_runs",
    ])?;
    for r in rows {
        w.write_record([
            depth_m.to_string(),
            window.to_string(),
            r.radius_m.to_string(),
            r.rmse_m.to_string(),
            r.mean_error_m.to_string(),
            r.sd_error_m.to_string(),
            r.n_valid.to_string(),
            r.n_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
