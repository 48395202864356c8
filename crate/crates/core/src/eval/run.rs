use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::stats::{iqm, mean, probability_of_improvement, rms, std_dev};
use crate::baseline::{BaselineConfig, PredefinedPath};
use crate::env::{EnvConfig, Environment, TrajectoryRow};
use crate::error::{Error, Result};
use crate::geometry::{seeded_rng, stream_seed, units_to_meters, Stream};
use crate::par::{map_indexed, Exec};
use crate::rl::{ActionMode, PolicySnapshot};

/// Steps 1..=50.
pub const TRANSIENT_STEPS: usize = 50;
/// Steps 150..=200 of a 200-step episode, i.e. the last 51 steps.
pub const STEADY_STEPS: usize = 51;

/// What drives the agent during evaluation.
#[derive(Debug, Clone)]
pub enum EvalPolicy {
    /// A trained actor, acting greedily.
    Actor(PolicySnapshot),
    Predefined(BaselineConfig),
}

impl EvalPolicy {
    pub fn default_id(&self) -> &'static str {
        match self {
            EvalPolicy::Actor(_) => "actor",
            EvalPolicy::Predefined(_) => "predefined",
        }
    }
}

/// Per-step target error in metres, one row per run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMatrix {
    pub policy_id: String,
    pub seeds: Vec<u64>,
    pub errors: Array2<f64>,
}

impl RunMatrix {
    pub fn n_runs(&self) -> usize {
        self.errors.nrows()
    }

    pub fn steps(&self) -> usize {
        self.errors.ncols()
    }

    /// CSV with columns `run, seed, e_1 .. e_N`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["run".to_string(), "seed".to_string()];
        header.extend((1..=self.steps()).map(|s| format!("e_{s}")));
        w.write_record(&header)?;
        for (i, row) in self.errors.axis_iter(Axis(0)).enumerate() {
            let mut rec = vec![i.to_string(), self.seeds[i].to_string()];
            rec.extend(row.iter().map(|e| e.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, policy_id: &str) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut seeds = Vec::new();
        let mut flat = Vec::new();
        let mut cols = None;
        for rec in r.records() {
            let rec = rec?;
            let n = rec.len().saturating_sub(2);
            if *cols.get_or_insert(n) != n || n == 0 {
                return Err(Error::Shape {
                    expected: cols.unwrap_or(0),
                    got: n,
                });
            }
            seeds.push(
                rec[1]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad seed {:?}", &rec[1])))?,
            );
            for f in rec.iter().skip(2) {
                flat.push(
                    f.parse()
                        .map_err(|_| Error::Config(format!("bad error value {f:?}")))?,
                );
            }
        }
        let steps = cols.unwrap_or(0);
        let errors =
            Array2::from_shape_vec((seeds.len(), steps), flat).map_err(|_| Error::Shape {
                expected: steps,
                got: 0,
            })?;
        Ok(Self {
            policy_id: policy_id.to_string(),
            seeds,
            errors,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub matrix: RunMatrix,
    /// Full trajectory of run 0, including the reset state.
    pub trajectory: Vec<TrajectoryRow>,
}

/// Runs `n_runs` independent episodes of the full horizon. Episodes never
/// stop early on the distance bounds, so every row has `max_steps` entries.
pub fn evaluate(
    policy: &EvalPolicy,
    env_cfg: &EnvConfig,
    n_runs: usize,
    seed: u64,
    exec: Exec,
) -> Result<Evaluation> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    let cfg = EnvConfig {
        terminate_on_bounds: false,
        ..env_cfg.clone()
    };
    cfg.validate()?;
    if let EvalPolicy::Predefined(b) = policy {
        b.validate()?;
    }
    let steps = cfg.max_steps as usize;
    let runs = map_indexed(
        exec,
        n_runs,
        |run| -> Result<(u64, Vec<f64>, Vec<TrajectoryRow>)> {
            let run_seed = stream_seed(seed, Stream::Evaluation, &[run as u64]);
            let mut rng = seeded_rng(run_seed);
            let mut env = Environment::new(cfg.clone())?;
            let mut baseline = match policy {
                EvalPolicy::Predefined(b) => Some(PredefinedPath::new(b, &cfg)?),
                EvalPolicy::Actor(_) => None,
            };
            let mut obs = env.reset(&mut rng);
            let mut traj = Vec::new();
            if run == 0 {
                traj.push(env.trajectory_row(None));
            }
            let mut errs = Vec::with_capacity(steps);
            while !env.is_done() {
                let action = match (policy, baseline.as_mut()) {
                    (EvalPolicy::Actor(snap), _) => {
                        snap.act(&obs.to_array(), ActionMode::Greedy, &mut rng)?
                    }
                    (EvalPolicy::Predefined(_), Some(b)) => b.action(&obs),
                    (EvalPolicy::Predefined(_), None) => unreachable!(),
                };
                let res = env.step(action, &mut rng)?;
                errs.push(units_to_meters(res.info.e_q));
                if run == 0 {
                    traj.push(env.trajectory_row(Some(&res.info)));
                }
                obs = res.obs;
            }
            Ok((run_seed, errs, traj))
        },
    );

    let mut seeds = Vec::with_capacity(n_runs);
    let mut flat = Vec::with_capacity(n_runs * steps);
    let mut trajectory = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        let (s, errs, traj) = r?;
        if errs.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("evaluation error"));
        }
        seeds.push(s);
        flat.extend(errs);
        if i == 0 {
            trajectory = traj;
        }
    }
    let errors = Array2::from_shape_vec((n_runs, steps), flat).expect("fixed horizon");
    Ok(Evaluation {
        matrix: RunMatrix {
            policy_id: policy.default_id().to_string(),
            seeds,
            errors,
        },
        trajectory,
    })
}

fn transient_range(steps: usize) -> std::ops::Range<usize> {
    0..TRANSIENT_STEPS.min(steps)
}

fn steady_range(steps: usize) -> std::ops::Range<usize> {
    steps.saturating_sub(STEADY_STEPS)..steps
}

/// Summary statistics of a [`RunMatrix`], all in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub policy_id: String,
    pub n_runs: usize,
    pub steps: usize,
    /// IQM of `e_q` across runs at each step.
    pub per_step_iqm: Vec<f64>,
    /// Population SD of `e_q` across runs at each step.
    pub per_step_sd: Vec<f64>,
    /// `sqrt(mean(e_q^2))` across runs at each step.
    pub per_step_rmse: Vec<f64>,
    /// Mean of `per_step_iqm` over steps 1..=50.
    pub transient_iqm: f64,
    /// Mean of `per_step_iqm` over the last 51 steps.
    pub steady_iqm: f64,
    pub run_transient_mean: Vec<f64>,
    pub run_steady_mean: Vec<f64>,
    #[serde(default)]
    pub prob_improvement_vs: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn from_matrix(m: &RunMatrix) -> Result<Self> {
        let steps = m.steps();
        if steps == 0 {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        let mut per_step_iqm = Vec::with_capacity(steps);
        let mut per_step_sd = Vec::with_capacity(steps);
        let mut per_step_rmse = Vec::with_capacity(steps);
        for col in m.errors.axis_iter(Axis(1)) {
            let v = col.to_vec();
            per_step_iqm.push(iqm(&v)?);
            per_step_sd.push(std_dev(&v));
            per_step_rmse.push(rms(&v));
        }
        let (tr, st) = (transient_range(steps), steady_range(steps));
        let run_mean = |r: std::ops::Range<usize>| -> Vec<f64> {
            m.errors
                .axis_iter(Axis(0))
                .map(|row| mean(&row.as_slice().expect("row-major")[r.clone()]))
                .collect()
        };
        Ok(Self {
            policy_id: m.policy_id.clone(),
            n_runs: m.n_runs(),
            steps,
            transient_iqm: mean(&per_step_iqm[tr.clone()]),
            steady_iqm: mean(&per_step_iqm[st.clone()]),
            run_transient_mean: run_mean(tr),
            run_steady_mean: run_mean(st),
            per_step_iqm,
            per_step_sd,
            per_step_rmse,
            prob_improvement_vs: BTreeMap::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        if m.per_step_iqm.len() != m.steps
            || m.per_step_sd.len() != m.steps
            || m.run_transient_mean.len() != m.n_runs
            || m.run_steady_mean.len() != m.n_runs
        {
            return Err(Error::Shape {
                expected: m.steps,
                got: m.per_step_iqm.len(),
            });
        }
        Ok(m)
    }

    /// Plot data: `step, iqm, sd, rmse`.
    pub fn write_per_step_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "iqm_m", "sd_m", "rmse_m"])?;
        for i in 0..self.steps {
            w.write_record([
                (i + 1).to_string(),
                self.per_step_iqm[i].to_string(),
                self.per_step_sd[i].to_string(),
                self.per_step_rmse[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Relative change of `a` against `b` in percent; `None` when `b` is zero
/// and `a` is not.
pub fn delta_percent(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(0.0)
    } else if b == 0.0 {
        None
    } else {
        Some((a - b) / b * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub n_runs: usize,
    pub steps: usize,
    pub transient_iqm_a: f64,
    pub transient_iqm_b: f64,
    pub steady_iqm_a: f64,
    pub steady_iqm_b: f64,
    pub transient_delta_pct: Option<f64>,
    pub steady_delta_pct: Option<f64>,
    /// Probability that a run of `a` has a lower transient-window mean error
    /// than a run of `b`.
    pub prob_improvement: f64,
    pub prob_improvement_steady: f64,
}

pub fn compare(a: &Metrics, b: &Metrics) -> Result<Comparison> {
    if a.n_runs != b.n_runs {
        return Err(Error::Shape {
            expected: a.n_runs,
            got: b.n_runs,
        });
    }
    if a.steps != b.steps {
        return Err(Error::Shape {
            expected: a.steps,
            got: b.steps,
        });
    }
    Ok(Comparison {
        a: a.policy_id.clone(),
        b: b.policy_id.clone(),
        n_runs: a.n_runs,
        steps: a.steps,
        transient_iqm_a: a.transient_iqm,
        transient_iqm_b: b.transient_iqm,
        steady_iqm_a: a.steady_iqm,
        steady_iqm_b: b.steady_iqm,
        transient_delta_pct: delta_percent(a.transient_iqm, b.transient_iqm),
        steady_delta_pct: delta_percent(a.steady_iqm, b.steady_iqm),
        prob_improvement: probability_of_improvement(&a.run_transient_mean, &b.run_transient_mean)?,
        prob_improvement_steady: probability_of_improvement(
            &a.run_steady_mean,
            &b.run_steady_mean,
        )?,
    })
}

/// Side-by-side per-step IQM curves: `step, iqm_a, sd_a, iqm_b, sd_b`.
pub fn write_comparison_csv(path: &Path, a: &Metrics, b: &Metrics) -> Result<()> {
    compare(a, b)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "iqm_a_m", "sd_a_m", "iqm_b_m", "sd_b_m"])?;
    for i in 0..a.steps {
        w.write_record([
            (i + 1).to_string(),
            a.per_step_iqm[i].to_string(),
            a.per_step_sd[i].to_string(),
            b.per_step_iqm[i].to_string(),
            b.per_step_sd[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
