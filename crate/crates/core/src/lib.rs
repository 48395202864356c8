//! Range-only single-beacon (ROSB) target localization workbench.
//!
//! The crate bundles a planar agent/target simulator with noisy slant-range
//! sensing, a sliding-window least-squares target estimator, a small dense
//! network engine, three actor-critic learners (DDPG, TD3 and SAC with fixed
//! or automatic entropy), an analytic circumnavigation baseline and the
//! statistics used to compare policies.
//!
//! All internal distances are scaled so that `1.0` equals one kilometre.
//! Configuration structs take metres and seconds and convert at the boundary.

pub mod baseline;
pub mod env;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod par;
pub mod rl;

pub use error::{Error, Result};
pub use geometry::{Angle, NoiseModel, Vec2};

#[cfg(test)]
mod testutil;
