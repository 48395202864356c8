//! Planar geometry, slant-range projection and seeded random streams.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metres per internal distance unit.
pub const METERS_PER_UNIT: f64 = 1000.0;

pub fn meters_to_units(m: f64) -> f64 {
    m / METERS_PER_UNIT
}

pub fn units_to_meters(u: f64) -> f64 {
    u * METERS_PER_UNIT
}

/// A point or vector in the agent plane, in scaled units (1.0 = 1 km).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector `[cos θ, sin θ]`.
    pub fn from_heading(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A heading in radians, always inside `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    /// Wraps a finite angle; non-finite input is rejected.
    pub fn new(theta: f64) -> Result<Self> {
        wrap_angle(theta)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// `self + delta`, wrapped. `delta` must be finite.
    pub fn turned(self, delta: f64) -> Self {
        Angle(wrap_radians(self.0 + delta))
    }
}

fn wrap_radians(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Maps `theta` onto `(-π, π]`.
pub fn wrap_angle(theta: f64) -> Result<Angle> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(Angle(wrap_radians(theta)))
}

/// Range-noise parameters: additive Gaussian with standard deviation `sigma`
/// (scaled units) and a systematic bias of `epsilon_frac` times the true
/// slant distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub epsilon_frac: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        sigma: 0.0,
        epsilon_frac: 0.0,
    };

    pub fn new(sigma: f64, epsilon_frac: f64) -> Result<Self> {
        let n = Self {
            sigma,
            epsilon_frac,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon_frac) {
            return Err(Error::Config(format!(
                "noise epsilon fraction must lie in [0, 1), got {}",
                self.epsilon_frac
            )));
        }
        Ok(())
    }
}

/// Projects a slant range onto the agent plane given the target depth.
///
/// Fails with [`Error::DegenerateRange`] when the slant is shorter than the
/// depth, which only happens when noise pushed the reading below the
/// geometric minimum.
pub fn project_slant_range(slant: f64, depth: f64) -> Result<f64> {
    if !(slant.is_finite() && depth.is_finite()) {
        return Err(Error::NonFinite("range"));
    }
    if slant < depth {
        return Err(Error::DegenerateRange { slant, depth });
    }
    // (s - d)(s + d) keeps precision when s is close to d.
    Ok(((slant - depth) * (slant + depth)).sqrt())
}

/// The deterministic generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent consumers of randomness inside one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Exploration = 2,
    Learner = 3,
    Init = 4,
    Evaluation = 5,
    Sweep = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a root seed and a path of indices, so that
/// every (episode, env, consumer) triple has its own stream regardless of
/// scheduling order.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Seed of the generator returned by [`stream_rng`].
pub fn stream_seed(root: u64, stream: Stream, path: &[u64]) -> u64 {
    derive_seed(derive_seed(root, &[stream as u64]), path)
}

pub fn stream_rng(root: u64, stream: Stream, path: &[u64]) -> SimRng {
    seeded_rng(stream_seed(root, stream, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap().radians(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap().radians() - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI).unwrap().radians(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn projection_examples() {
        assert!((project_slant_range(0.005, 0.003).unwrap() - 0.004).abs() < 1e-15);
        assert_eq!(project_slant_range(0.2, 0.2).unwrap(), 0.0);
        assert!(matches!(
            project_slant_range(0.1, 0.2),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn rng_is_deterministic_and_seed_sensitive() {
        let draw = |s| {
            let mut r = seeded_rng(s);
            (r.random::<u64>(), r.random::<u64>())
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn seed_7_normal_golden() {
        // Recorded once from ChaCha8 seeded with 7 through `StandardNormal`.
        let golden = [
            -0.7753719332177971,
            -1.3834217200084091,
            0.8897130187430372,
            0.3597790583440233,
            0.30000900340094644,
        ];
        let mut r = seeded_rng(7);
        for g in golden {
            let z: f64 = r.sample(StandardNormal);
            assert_eq!(z, g);
        }
    }

    #[test]
    fn derived_streams_differ() {
        let a = derive_seed(9, &[0, 1]);
        let b = derive_seed(9, &[1, 0]);
        let c = derive_seed(9, &[0, 1]);
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(theta in -1e4f64..1e4) {
            let w = wrap_angle(theta).unwrap().radians();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w).unwrap().radians(), w);
            let k = ((theta - w) / TAU).round();
            prop_assert!((theta - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn zero_depth_projection_is_identity(d in 0.0f64..10.0) {
            prop_assert_eq!(project_slant_range(d, 0.0).unwrap(), d);
        }

        #[test]
        fn projection_inverts_pythagoras(p in 1e-3f64..1.0, z in 0.0f64..0.5) {
            let slant = (p * p + z * z).sqrt();
            prop_assert!((project_slant_range(slant, z).unwrap() - p).abs() < 1e-12);
        }
    }
}
