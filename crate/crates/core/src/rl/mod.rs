//! Actor-critic learners, replay, exploration schedules and the parallel
//! training loop.

mod learners;
mod replay;
mod schedule;
mod train;

pub use learners::{
    build_learner, load_policy, save_checkpoints, select_action, squashed_log_prob, ActionMode,
    Ddpg, Learner, PolicyKind, PolicySnapshot, Sac, Td3, UpdateReport, LOG_STD_MAX, LOG_STD_MIN,
};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use schedule::{batch_size, noise_scale, BatchGrowth};
pub use train::{
    read_learning_curve, train, write_learning_curve, EpisodeRecord, TrainOptions, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Ddpg,
    Td3,
    /// SAC with a constant entropy coefficient.
    SacC,
    /// SAC with the entropy coefficient tuned by Adam.
    SacA,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ddpg => "ddpg",
            Algo::Td3 => "td3",
            Algo::SacC => "sac-c",
            Algo::SacA => "sac-a",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ddpg" => Some(Algo::Ddpg),
            "td3" => Some(Algo::Td3),
            "sac-c" => Some(Algo::SacC),
            "sac-a" => Some(Algo::SacA),
            _ => None,
        }
    }

    pub fn is_sac(self) -> bool {
        matches!(self, Algo::SacC | Algo::SacA)
    }
}

/// Training hyperparameters. Defaults follow the published table; the
/// episode budget has no published value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub replay_capacity: usize,
    pub batch_start: usize,
    pub batch_max: usize,
    pub batch_double_every: u64,
    pub batch_growth: BatchGrowth,
    /// Episodes driven by uniform random actions.
    pub warmup_episodes: u64,
    /// Aggregate environment steps between update blocks.
    pub update_every: u64,
    /// Gradient updates per block.
    pub update_times: usize,
    pub parallel_envs: usize,
    pub explore_noise_init: f64,
    pub explore_noise_decay: f64,
    pub policy_delay: u64,
    pub td3_smoothing: bool,
    pub td3_noise_std: f64,
    pub td3_noise_clip: f64,
    pub alpha: f64,
    pub target_entropy: f64,
    pub hidden: Vec<usize>,
    pub episodes: u64,
    /// Episodes between periodic checkpoints; 0 disables them.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.01,
            lr_actor: 1e-3,
            lr_critic: 1e-4,
            replay_capacity: 500_000,
            batch_start: 32,
            batch_max: 2048,
            batch_double_every: 200_000,
            batch_growth: BatchGrowth::Doubling,
            warmup_episodes: 10_000,
            update_every: 30,
            update_times: 20,
            parallel_envs: 8,
            explore_noise_init: 0.5,
            explore_noise_decay: 0.9999,
            policy_delay: 2,
            td3_smoothing: true,
            td3_noise_std: 0.2,
            td3_noise_clip: 0.5,
            alpha: 0.005,
            target_entropy: -1.0,
            hidden: vec![64, 32],
            episodes: 100_000,
            checkpoint_every: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.lr_actor <= 0.0 || self.lr_critic <= 0.0 {
            return bad("learning rates must be > 0");
        }
        if self.replay_capacity == 0 || self.batch_start == 0 || self.batch_max < self.batch_start {
            return bad("need capacity > 0 and 0 < batch_start <= batch_max");
        }
        if self.batch_double_every == 0 || self.update_every == 0 || self.parallel_envs == 0 {
            return bad("batch_double_every, update_every and parallel_envs must be >= 1");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be >= 1");
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return bad("alpha must be >= 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        Ok(())
    }
}
