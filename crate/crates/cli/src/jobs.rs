//! Fully resolved commands. A job carries every value it needs, so the
//! manifest that records it is enough to run it again.

use std::path::{Path, PathBuf};

use rosb_core::baseline::BaselineConfig;
use rosb_core::env::{write_trajectory_csv, EnvConfig};
use rosb_core::eval::{
    compare, evaluate, probability_of_improvement, radius_sweep, rolling_curve,
    write_comparison_csv, write_rolling_curve, write_sweep_csv, EvalPolicy, Metrics, SweepConfig,
};
use rosb_core::par::Exec;
use rosb_core::rl::{
    load_policy, read_learning_curve, save_checkpoints, train, write_learning_curve, Algo,
    TrainConfig, TrainOptions,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The interquartile mean needs at least this many samples.
const MIN_RUNS_FOR_METRICS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicySpec {
    Predefined(BaselineConfig),
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Job {
    Train {
        algo: Algo,
        seed: u64,
        env: EnvConfig,
        train: TrainConfig,
    },
    Eval {
        policy: PolicySpec,
        policy_id: String,
        runs: usize,
        seed: u64,
        env: EnvConfig,
        vs: Vec<PathBuf>,
    },
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
    Sweep {
        depth_m: f64,
        radii_m: Vec<f64>,
        windows: Vec<usize>,
        runs: usize,
        step_m: f64,
        noise_sigma_m: f64,
        noise_epsilon_frac: f64,
        seed: u64,
    },
    Export {
        curve: PathBuf,
        window: usize,
    },
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    algo: Algo,
    episodes: usize,
    total_steps: u64,
    critic_updates: u64,
    actor_updates: u64,
}

fn data<E: std::fmt::Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{ctx}: {e}"))
}

impl Job {
    /// Checks argument-level constraints before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Job::Train { env, train, .. } => {
                env.validate()?;
                train.validate()?;
            }
            Job::Eval {
                env,
                runs,
                policy,
                vs,
                ..
            } => {
                env.validate()?;
                if *runs == 0 {
                    return Err(CliError::Usage("--runs must be >= 1".into()));
                }
                if *runs < MIN_RUNS_FOR_METRICS && !vs.is_empty() {
                    return Err(CliError::Usage(format!(
                        "--vs needs at least {MIN_RUNS_FOR_METRICS} runs"
                    )));
                }
                if let PolicySpec::Predefined(b) = policy {
                    b.validate()?;
                }
            }
            Job::Sweep { .. } => {
                for cfg in self.sweep_configs() {
                    cfg.validate()?;
                }
                if self.sweep_configs().is_empty() {
                    return Err(CliError::Usage("no sweep window given".into()));
                }
            }
            Job::Export { window, .. } if *window == 0 => {
                return Err(CliError::Usage("--window must be >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    fn sweep_configs(&self) -> Vec<SweepConfig> {
        let Job::Sweep {
            depth_m,
            radii_m,
            windows,
            runs,
            step_m,
            noise_sigma_m,
            noise_epsilon_frac,
            ..
        } = self
        else {
            return Vec::new();
        };
        windows
            .iter()
            .map(|&w| SweepConfig {
                depth_m: *depth_m,
                radii_m: radii_m.clone(),
                window: w,
                n_runs: *runs,
                step_m: *step_m,
                noise_sigma_m: *noise_sigma_m,
                noise_epsilon_frac: *noise_epsilon_frac,
            })
            .collect()
    }

    /// Runs the job, writing into `out`. Returns the files written,
    /// relative to `out`.
    pub fn run(&self, out: &Path, exec: Exec) -> Result<Vec<String>, CliError> {
        self.validate()?;
        std::fs::create_dir_all(out).map_err(data("cannot create output directory"))?;
        let mut written = Vec::new();
        match self {
            Job::Train {
                algo,
                seed,
                env,
                train: tc,
            } => {
                let outcome = train(
                    *algo,
                    env,
                    tc,
                    *seed,
                    &TrainOptions {
                        exec,
                        out_dir: Some(out.to_path_buf()),
                    },
                )?;
                write_learning_curve(&out.join("learning_curve.csv"), &outcome.records)?;
                written.push("learning_curve.csv".into());
                save_checkpoints(
                    outcome.learner.as_ref(),
                    &out.join("checkpoints").join("final"),
                )?;
                written.push("checkpoints/final".into());
                let summary = TrainSummary {
                    algo: *algo,
                    episodes: outcome.records.len(),
                    total_steps: outcome.total_steps,
                    critic_updates: outcome.learner.critic_updates(),
                    actor_updates: outcome.learner.actor_updates(),
                };
                write_json(&out.join("summary.json"), &summary)?;
                written.push("summary.json".into());
            }
            Job::Eval {
                policy,
                policy_id,
                runs,
                seed,
                env,
                vs,
            } => {
                let pol = match policy {
                    PolicySpec::Predefined(b) => EvalPolicy::Predefined(*b),
                    PolicySpec::Checkpoint { path } => EvalPolicy::Actor(
                        load_policy(path)
                            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
                    ),
                };
                let mut ev = evaluate(&pol, env, *runs, *seed, exec)?;
                ev.matrix.policy_id = policy_id.clone();
                ev.matrix.write_csv(&out.join("run_matrix.csv"))?;
                write_trajectory_csv(&out.join("trajectory.csv"), &ev.trajectory)?;
                written.extend(["run_matrix.csv", "trajectory.csv"].map(String::from));
                if *runs < MIN_RUNS_FOR_METRICS {
                    eprintln!(
                        "rosb: fewer than {MIN_RUNS_FOR_METRICS} runs, IQM metrics not written"
                    );
                    return Ok(written);
                }
                let mut metrics = Metrics::from_matrix(&ev.matrix)?;
                for other in vs {
                    let o = Metrics::load(other)
                        .map_err(|e| CliError::Data(format!("{}: {e}", other.display())))?;
                    compare(&metrics, &o)?;
                    let p = probability_of_improvement(
                        &metrics.run_transient_mean,
                        &o.run_transient_mean,
                    )?;
                    metrics.prob_improvement_vs.insert(o.policy_id.clone(), p);
                }
                metrics.save(&out.join("metrics.json"))?;
                metrics.write_per_step_csv(&out.join("per_step.csv"))?;
                written.extend(["metrics.json", "per_step.csv"].map(String::from));
            }
            Job::Compare { a, b } => {
                let ma = Metrics::load(a)
                    .map_err(|e| CliError::Data(format!("{}: {e}", a.display())))?;
                let mb = Metrics::load(b)
                    .map_err(|e| CliError::Data(format!("{}: {e}", b.display())))?;
                let c = compare(&ma, &mb)
                    .map_err(|e| CliError::Data(format!("cannot compare: {e}")))?;
                write_json(&out.join("comparison.json"), &c)?;
                write_comparison_csv(&out.join("comparison.csv"), &ma, &mb)?;
                written.extend(["comparison.json", "comparison.csv"].map(String::from));
            }
            Job::Sweep { seed, .. } => {
                for cfg in self.sweep_configs() {
                    let rows = radius_sweep(&cfg, *seed, exec)?;
                    let name = format!("sweep_w{}.csv", cfg.window);
                    write_sweep_csv(&out.join(&name), cfg.window, cfg.depth_m, &rows)?;
                    written.push(name);
                }
            }
            Job::Export { curve, window } => {
                let recs = read_learning_curve(curve)
                    .map_err(|e| CliError::Data(format!("{}: {e}", curve.display())))?;
                let pts = rolling_curve(&recs, *window)?;
                write_rolling_curve(&out.join("rolling_curve.csv"), &pts)?;
                written.push("rolling_curve.csv".into());
            }
        }
        Ok(written)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
