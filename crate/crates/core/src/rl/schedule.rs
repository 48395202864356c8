use serde::{Deserialize, Serialize};

/// How the minibatch grows every `batch_double_every` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchGrowth {
    /// 32, 64, 128, ...
    Doubling,
    /// 32, 34, 36, ...
    Additive,
}

/// Exploration noise scale after `episodes` completed episodes.
pub fn noise_scale(init: f64, decay: f64, episodes: u64) -> f64 {
    init * decay.powf(episodes as f64)
}

pub fn batch_size(
    start: usize,
    max: usize,
    every: u64,
    growth: BatchGrowth,
    episodes: u64,
) -> usize {
    let k = episodes / every.max(1);
    let size = match growth {
        BatchGrowth::Doubling => {
            if k >= 63 {
                usize::MAX
            } else {
                start.saturating_mul(1usize << k)
            }
        }
        BatchGrowth::Additive => start.saturating_add(2usize.saturating_mul(k as usize)),
    };
    size.min(max)
}
