//! Sliding-window least-squares range-only triangulation.
//!
//! Each planar range `d_i` taken from agent position `p_i` gives
//! `|p_i - q|^2 = d_i^2`. Expanding and treating `s = |q|^2` as an extra
//! free unknown turns the problem linear:
//!
//! ```text
//! 2 p_i . q - s = |p_i|^2 - d_i^2
//! ```
//!
//! The system is solved in coordinates centred on the measurement centroid
//! (an affine change of unknowns, so the solution is unchanged) with an SVD,
//! which also yields the condition number used to flag degenerate,
//! near-collinear geometries.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Normal-equation condition number above which an estimate is invalid.
pub const MAX_CONDITION: f64 = 1e8;

/// Default sliding-window length.
pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// Agent position when the range was taken.
    pub p: Vec2,
    /// Projected planar range, `>= 0`.
    pub range_p: f64,
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub q_hat: Vec2,
    pub valid: bool,
    /// Condition number of the normal equations `AᵀA`.
    pub condition: f64,
    pub residual_rms: f64,
    /// The unconstrained stand-in for `|q|^2`.
    pub aux: f64,
}

#[derive(Debug, Clone)]
pub struct LsEstimator {
    window: usize,
    buf: VecDeque<Measurement>,
}

impl LsEstimator {
    pub fn new(window: usize) -> Result<Self> {
        if window < 3 {
            return Err(Error::Config(format!(
                "estimator window must be >= 3, got {window}"
            )));
        }
        Ok(Self {
            window,
            buf: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.buf.iter()
    }

    /// Appends a measurement, evicting the oldest once the window is full.
    pub fn push(&mut self, m: Measurement) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(m);
    }

    pub fn solve(&self) -> Result<Estimate> {
        solve_ranges(self.buf.iter().copied())
    }
}

/// Solves the linearised range equations for an arbitrary set of
/// measurements.
pub fn solve_ranges<I>(measurements: I) -> Result<Estimate>
where
    I: IntoIterator<Item = Measurement>,
{
    let ms: Vec<Measurement> = measurements.into_iter().collect();
    let m = ms.len();
    if m < 3 {
        return Err(Error::InsufficientData(m));
    }

    let centroid = ms.iter().fold(Vec2::ZERO, |acc, x| acc + x.p) * (1.0 / m as f64);
    let mut a = DMatrix::<f64>::zeros(m, 3);
    let mut b = DVector::<f64>::zeros(m);
    for (i, meas) in ms.iter().enumerate() {
        let r = meas.p - centroid;
        a[(i, 0)] = 2.0 * r.x;
        a[(i, 1)] = 2.0 * r.y;
        a[(i, 2)] = -1.0;
        b[i] = r.norm_sq() - meas.range_p * meas.range_p;
    }

    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.max();
    let s_min = sv.min();
    let condition = if s_min > 0.0 {
        (s_max / s_min).powi(2)
    } else {
        f64::INFINITY
    };

    let eps = s_max * f64::EPSILON * m as f64;
    let x = svd
        .solve(&b, eps)
        .map_err(|e| Error::Config(format!("svd solve failed: {e}")))?;

    let q_local = Vec2::new(x[0], x[1]);
    let q_hat = centroid + q_local;
    // s_local = |q - c|^2, so |q|^2 = s_local + 2 c.q - |c|^2.
    let aux = x[2] + 2.0 * centroid.dot(q_hat) - centroid.norm_sq();
    let residual = &a * &x - &b;
    let residual_rms = (residual.norm_squared() / m as f64).sqrt();

    let valid = condition.is_finite() && condition <= MAX_CONDITION && q_hat.is_finite();
    Ok(Estimate {
        q_hat: if q_hat.is_finite() { q_hat } else { centroid },
        valid,
        condition,
        residual_rms: if residual_rms.is_finite() {
            residual_rms
        } else {
            f64::MAX
        },
        aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exact(ps: &[Vec2], q: Vec2) -> Vec<Measurement> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| Measurement {
                p,
                range_p: p.distance(q),
                step: i as u32,
            })
            .collect()
    }

    /// Brute-force oracle: minimise Σ(|p_i - q| - d_i)^2 on a refining grid.
    fn grid_search(ms: &[Measurement], lo: Vec2, hi: Vec2) -> Vec2 {
        let cost = |q: Vec2| -> f64 {
            ms.iter()
                .map(|m| (m.p.distance(q) - m.range_p).powi(2))
                .sum()
        };
        let (mut lo, mut hi) = (lo, hi);
        let mut best = lo;
        for _ in 0..12 {
            let n = 40;
            let mut best_c = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=n {
                    let q = Vec2::new(
                        lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                        lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                    );
                    let c = cost(q);
                    if c < best_c {
                        best_c = c;
                        best = q;
                    }
                }
            }
            let half = Vec2::new((hi.x - lo.x) / 10.0, (hi.y - lo.y) / 10.0);
            lo = best - half;
            hi = best + half;
        }
        best
    }

    #[test]
    fn recovers_target_from_three_exact_ranges() {
        let ps = [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.1, 0.0),
            Vec2::new(0.0, 0.1),
        ];
        let q = Vec2::new(0.03, 0.04);
        let ms = exact(&ps, q);
        let est = solve_ranges(ms.iter().copied()).unwrap();
        assert!(est.valid);
        assert!(est.q_hat.distance(q) < 1e-9);
        assert!((est.aux - q.norm_sq()).abs() < 1e-12);

        let oracle = grid_search(&ms, Vec2::new(-0.5, -0.5), Vec2::new(0.5, 0.5));
        assert!(oracle.distance(q) < 1e-9, "oracle {oracle:?}");
    }

    #[test]
    fn collinear_positions_are_invalid() {
        let ps: Vec<Vec2> = (0..10).map(|i| Vec2::new(0.02 * i as f64, 0.0)).collect();
        let ms = exact(&ps, Vec2::new(0.05, 0.1));
        let est = solve_ranges(ms).unwrap();
        assert!(!est.valid);
        assert!(est.q_hat.is_finite());
    }

    #[test]
    fn too_few_measurements() {
        let mut e = LsEstimator::new(30).unwrap();
        for p in [Vec2::ZERO, Vec2::new(0.1, 0.0)] {
            e.push(Measurement {
                p,
                range_p: 0.1,
                step: 0,
            });
        }
        assert!(matches!(e.solve(), Err(Error::InsufficientData(2))));
        assert!(LsEstimator::new(2).is_err());
    }

    #[test]
    fn window_evicts_oldest() {
        let mut e = LsEstimator::new(30).unwrap();
        for i in 0..31 {
            e.push(Measurement {
                p: Vec2::new(i as f64, 0.0),
                range_p: 1.0,
                step: i,
            });
        }
        assert_eq!(e.len(), 30);
        assert_eq!(e.measurements().next().unwrap().step, 1);

        let mut big = LsEstimator::new(300).unwrap();
        for i in 0..400 {
            big.push(Measurement {
                p: Vec2::ZERO,
                range_p: 0.0,
                step: i,
            });
        }
        assert_eq!(big.len(), 300);
    }

    #[test]
    fn older_data_never_changes_the_windowed_solution() {
        let q = Vec2::new(0.01, -0.02);
        let circle: Vec<Vec2> = (0..20)
            .map(|k| q + Vec2::from_heading(k as f64 * 0.4) * 0.2)
            .collect();
        let mut a = LsEstimator::new(10).unwrap();
        let mut b = LsEstimator::new(10).unwrap();
        for m in exact(
            &[Vec2::new(5.0, 5.0), Vec2::new(-3.0, 1.0)],
            Vec2::new(9.0, 9.0),
        ) {
            a.push(m);
        }
        for m in exact(&circle, q) {
            a.push(m);
            b.push(m);
        }
        assert_eq!(a.solve().unwrap(), b.solve().unwrap());
    }

    fn triangle() -> impl Strategy<Value = ([Vec2; 3], Vec2)> {
        let pt = || (-0.5f64..0.5, -0.5f64..0.5).prop_map(|(x, y)| Vec2::new(x, y));
        ([pt(), pt(), pt()], pt()).prop_filter("non-collinear", |(ps, _)| {
            (ps[1] - ps[0]).cross(ps[2] - ps[0]).abs() > 1e-3
        })
    }

    proptest! {
        #[test]
        fn exact_recovery(( ps, q) in triangle()) {
            let est = solve_ranges(exact(&ps, q)).unwrap();
            prop_assert!(est.valid);
            prop_assert!(est.q_hat.distance(q) < 1e-9);
            prop_assert!((est.aux - est.q_hat.norm_sq()).abs() < 1e-8);
        }

        #[test]
        fn translation_equivariance((ps, q) in triangle(), tx in -2.0f64..2.0, ty in -2.0f64..2.0) {
            let t = Vec2::new(tx, ty);
            let base = solve_ranges(exact(&ps, q)).unwrap().q_hat;
            let moved: Vec<Vec2> = ps.iter().map(|&p| p + t).collect();
            let shifted = solve_ranges(exact(&moved, q + t)).unwrap().q_hat;
            prop_assert!((shifted - (base + t)).norm() < 1e-9);
        }

        #[test]
        fn rotation_equivariance((ps, q) in triangle(), theta in -3.1f64..3.1) {
            let base = solve_ranges(exact(&ps, q)).unwrap().q_hat;
            let rotated: Vec<Vec2> = ps.iter().map(|&p| p.rotate(theta)).collect();
            let r = solve_ranges(exact(&rotated, q.rotate(theta))).unwrap().q_hat;
            prop_assert!((r - base.rotate(theta)).norm() < 1e-9);
        }
    }
}
