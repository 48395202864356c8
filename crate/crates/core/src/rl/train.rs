//! The training loop: `parallel_envs` workers step in lockstep, a single
//! learner owns the networks and the replay buffer.
//!
//! Scheduling is deterministic. Workers advance one step each per round
//! (possibly on a thread pool), their transitions are appended in worker
//! order, and every episode draws its randomness from streams keyed by its
//! episode id, so learning curves are a pure function of the configs and
//! the seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::learners::{build_learner, save_checkpoints, ActionMode, Learner, PolicyKind};
use super::replay::{Batch, ReplayBuffer, Transition};
use super::schedule::{batch_size, noise_scale};
use super::{Algo, TrainConfig};
use crate::env::{EnvConfig, Environment, Observation};
use crate::error::{Error, Result};
use crate::geometry::{stream_rng, units_to_meters, SimRng, Stream};
use crate::nn::Mlp;
use crate::par::{self, Exec};

/// One completed training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Completion index, 0-based and strictly increasing.
    pub episode: u64,
    pub env_id: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub final_e_q_m: f64,
    pub steps: u32,
    pub noise_scale: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub exec: Exec,
    /// Periodic checkpoints and divergence dumps go here when set.
    pub out_dir: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub learner: Box<dyn Learner>,
    pub total_steps: u64,
}

struct Worker {
    env: Environment,
    env_rng: SimRng,
    explore_rng: SimRng,
    obs: Observation,
    episode: Option<u64>,
    ret: f64,
    mode: ActionMode,
}

struct StepOut {
    transition: Transition,
    finished: Option<(f64, f64, u32)>,
}

impl Worker {
    fn start(&mut self, seed: u64, env_id: usize, episode: u64, algo: Algo, cfg: &TrainConfig) {
        self.env_rng = stream_rng(seed, Stream::Environment, &[episode, env_id as u64]);
        self.explore_rng = stream_rng(seed, Stream::Exploration, &[episode, env_id as u64]);
        self.obs = self.env.reset(&mut self.env_rng);
        self.episode = Some(episode);
        self.ret = 0.0;
        self.mode = if episode < cfg.warmup_episodes {
            ActionMode::Warmup
        } else if algo.is_sac() {
            ActionMode::Explore(0.0)
        } else {
            ActionMode::Explore(noise_scale(
                cfg.explore_noise_init,
                cfg.explore_noise_decay,
                episode,
            ))
        };
    }

    fn advance(&mut self, kind: PolicyKind, actor: &Mlp) -> Result<Option<StepOut>> {
        if self.episode.is_none() {
            return Ok(None);
        }
        let obs = self.obs.to_array();
        let action =
            super::learners::select_action(kind, actor, &obs, self.mode, &mut self.explore_rng)?;
        let res = self.env.step(action, &mut self.env_rng)?;
        self.ret += res.reward;
        self.obs = res.obs;
        let transition = Transition {
            obs,
            action,
            reward: res.reward,
            next_obs: res.obs.to_array(),
            done: res.done,
        };
        let finished = res.done.then(|| {
            self.episode = None;
            (self.ret, units_to_meters(res.info.e_q), res.info.step)
        });
        Ok(Some(StepOut {
            transition,
            finished,
        }))
    }

    fn noise(&self) -> f64 {
        match self.mode {
            ActionMode::Explore(s) => s,
            _ => 0.0,
        }
    }
}

fn dump_batch(out: Option<&Path>, update: u64, batch: &Batch) -> Option<PathBuf> {
    let dir = out?;
    let path = dir.join(format!("diverged_batch_{update}.json"));
    fs::create_dir_all(dir).ok()?;
    fs::write(&path, serde_json::to_vec_pretty(batch).ok()?).ok()?;
    Some(path)
}

/// Trains `algo` for `train_cfg.episodes` episodes.
pub fn train(
    algo: Algo,
    env_cfg: &EnvConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    env_cfg.validate()?;
    train_cfg.validate()?;
    let mut learner = build_learner(algo, train_cfg, &mut stream_rng(seed, Stream::Init, &[]))?;
    let mut learner_rng = stream_rng(seed, Stream::Learner, &[]);
    let mut buffer = ReplayBuffer::new(train_cfg.replay_capacity);

    let mut workers = Vec::with_capacity(train_cfg.parallel_envs);
    for _ in 0..train_cfg.parallel_envs {
        let env = Environment::new(env_cfg.clone())?;
        let obs = env.observation();
        workers.push(Worker {
            env,
            env_rng: stream_rng(seed, Stream::Environment, &[]),
            explore_rng: stream_rng(seed, Stream::Exploration, &[]),
            obs,
            episode: None,
            ret: 0.0,
            mode: ActionMode::Warmup,
        });
    }

    let mut next_episode = 0u64;
    for (i, w) in workers.iter_mut().enumerate() {
        if next_episode < train_cfg.episodes {
            w.start(seed, i, next_episode, algo, train_cfg);
            next_episode += 1;
        }
    }

    let mut records = Vec::with_capacity(train_cfg.episodes as usize);
    let mut total_steps = 0u64;
    let mut update_blocks = 0u64;
    let mut updates = 0u64;

    while workers.iter().any(|w| w.episode.is_some()) {
        let kind = learner.policy_kind();
        let actor = learner.actor();
        let outs = par::map_mut(opts.exec, &mut workers, |_, w| w.advance(kind, actor));

        for (env_id, out) in outs.into_iter().enumerate() {
            let Some(out) = out? else { continue };
            buffer.push(out.transition);
            total_steps += 1;
            if let Some((ret, e_q_m, steps)) = out.finished {
                let done_so_far = records.len() as u64;
                records.push(EpisodeRecord {
                    episode: done_so_far,
                    env_id,
                    ret,
                    final_e_q_m: e_q_m,
                    steps,
                    noise_scale: workers[env_id].noise(),
                    batch_size: current_batch(train_cfg, done_so_far),
                });
                let completed = records.len() as u64;
                if train_cfg.checkpoint_every > 0
                    && completed.is_multiple_of(train_cfg.checkpoint_every)
                {
                    if let Some(dir) = &opts.out_dir {
                        save_checkpoints(
                            learner.as_ref(),
                            &dir.join("checkpoints").join(format!("ep_{completed}")),
                        )?;
                    }
                }
                if next_episode < train_cfg.episodes {
                    workers[env_id].start(seed, env_id, next_episode, algo, train_cfg);
                    next_episode += 1;
                }
            }
        }

        while total_steps / train_cfg.update_every > update_blocks {
            update_blocks += 1;
            let bs = current_batch(train_cfg, records.len() as u64);
            if buffer.len() < bs {
                continue;
            }
            for _ in 0..train_cfg.update_times {
                let batch = buffer.sample(&mut learner_rng, bs);
                updates += 1;
                match learner.update(&batch, &mut learner_rng) {
                    Ok(_) => {}
                    Err(Error::Diverged { what, .. }) => {
                        return Err(Error::Diverged {
                            what,
                            update: updates,
                            dump: dump_batch(opts.out_dir.as_deref(), updates, &batch),
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    Ok(TrainOutcome {
        records,
        learner,
        total_steps,
    })
}

fn current_batch(cfg: &TrainConfig, episodes: u64) -> usize {
    batch_size(
        cfg.batch_start,
        cfg.batch_max,
        cfg.batch_double_every,
        cfg.batch_growth,
        episodes,
    )
}

pub fn write_learning_curve(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_learning_curve(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(algo: Algo, episodes: u64) -> (EnvConfig, TrainConfig) {
        let env = EnvConfig {
            max_steps: 50,
            ..EnvConfig::default()
        };
        let cfg = TrainConfig {
            episodes,
            warmup_episodes: 4,
            parallel_envs: 4,
            hidden: vec![16, 8],
            checkpoint_every: 0,
            ..TrainConfig::default()
        };
        let _ = algo;
        (env, cfg)
    }

    #[test]
    fn smoke_run_emits_one_record_per_episode() {
        for algo in [Algo::Ddpg, Algo::Td3, Algo::SacC, Algo::SacA] {
            let (env, cfg) = smoke(algo, 12);
            let out = train(algo, &env, &cfg, 3, &TrainOptions::default()).unwrap();
            assert_eq!(out.records.len(), 12);
            for (i, r) in out.records.iter().enumerate() {
                assert_eq!(r.episode, i as u64);
                assert!(r.steps >= 1 && r.steps <= 50);
            }
            assert!(out.learner.critic_updates() > 0, "{algo:?} never updated");
        }
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let (env, cfg) = smoke(Algo::Td3, 10);
        let a = train(
            Algo::Td3,
            &env,
            &cfg,
            9,
            &TrainOptions {
                exec: Exec::Sequential,
                out_dir: None,
            },
        )
        .unwrap();
        let b = train(
            Algo::Td3,
            &env,
            &cfg,
            9,
            &TrainOptions {
                exec: Exec::Parallel,
                out_dir: None,
            },
        )
        .unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.learner.actor(), b.learner.actor());
        let c = train(Algo::Td3, &env, &cfg, 10, &TrainOptions::default()).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn warmup_and_noise_schedule_in_records() {
        let (env, mut cfg) = smoke(Algo::Ddpg, 10);
        cfg.warmup_episodes = 0;
        let out = train(Algo::Ddpg, &env, &cfg, 1, &TrainOptions::default()).unwrap();
        for r in &out.records {
            assert!(r.noise_scale <= 0.5 && r.noise_scale > 0.5 * 0.9999f64.powi(11));
        }
    }

    #[test]
    fn learning_curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (env, cfg) = smoke(Algo::SacA, 6);
        let out = train(Algo::SacA, &env, &cfg, 2, &TrainOptions::default()).unwrap();
        let path = dir.path().join("curve.csv");
        write_learning_curve(&path, &out.records).unwrap();
        assert_eq!(read_learning_curve(&path).unwrap(), out.records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,env_id,return,final_e_q_m,steps,noise_scale,batch_size"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn periodic_checkpoints_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let (env, mut cfg) = smoke(Algo::Ddpg, 8);
        cfg.checkpoint_every = 4;
        let opts = TrainOptions {
            exec: Exec::Sequential,
            out_dir: Some(dir.path().to_path_buf()),
        };
        train(Algo::Ddpg, &env, &cfg, 2, &opts).unwrap();
        assert!(dir.path().join("checkpoints/ep_4/actor.json").exists());
        assert!(dir.path().join("checkpoints/ep_8/critic.json").exists());
    }
}
