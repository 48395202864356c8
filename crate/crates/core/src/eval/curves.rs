use std::path::Path;

use serde::Serialize;

use super::stats::rolling;
use crate::error::Result;
use crate::rl::EpisodeRecord;

/// One point of a smoothed learning curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub return_mean: f64,
    pub return_sd: f64,
    pub e_q_mean_m: f64,
    pub e_q_sd_m: f64,
}

/// Trailing-window smoothing of episode return and final target error,
/// in episode-completion order.
pub fn rolling_curve(records: &[EpisodeRecord], window: usize) -> Result<Vec<CurvePoint>> {
    let returns: Vec<f64> = records.iter().map(|r| r.ret).collect();
    let errors: Vec<f64> = records.iter().map(|r| r.final_e_q_m).collect();
    let (rm, rs) = rolling(&returns, window)?;
    let (em, es) = rolling(&errors, window)?;
    Ok(records
        .iter()
        .enumerate()
        .map(|(i, r)| CurvePoint {
            episode: r.episode,
            return_mean: rm[i],
            return_sd: rs[i],
            e_q_mean_m: em[i],
            e_q_sd_m: es[i],
        })
        .collect())
}

pub fn write_rolling_curve(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
