use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rosb_core::baseline::BaselineConfig;
use rosb_core::env::RewardTest;
use rosb_core::par::Exec;
use rosb_core::rl::Algo;

mod config;
mod error;
mod jobs;
mod manifest;

use config::FileConfig;
use error::CliError;
use jobs::{Job, PolicySpec};
use manifest::RunManifest;

/// Relative `--out` paths are resolved against this directory when set.
const OUT_ROOT_VAR: &str = "ROSB_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "rosb",
    version,
    about = "Range-only single-beacon target localization workbench"
)]
struct Cli {
    /// Run all Monte-Carlo and worker loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent and write checkpoints and learning curves.
    Train(TrainArgs),
    /// Evaluate a trained actor or the predefined path.
    Eval(EvalArgs),
    /// Compare two metrics files.
    Compare(CompareArgs),
    /// Estimation error as a function of loop radius.
    Sweep(SweepArgs),
    /// Rolling-window learning curve from a training run.
    Export(ExportArgs),
    /// Repeat a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ddpg,
    Td3,
    SacC,
    SacA,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Ddpg => Algo::Ddpg,
            AlgoArg::Td3 => Algo::Td3,
            AlgoArg::SacC => Algo::SacC,
            AlgoArg::SacA => Algo::SacA,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    #[value(name = "1")]
    T1,
    #[value(name = "2a")]
    T2a,
    #[value(name = "2b")]
    T2b,
}

impl From<TestArg> for RewardTest {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::T1 => RewardTest::T1,
            TestArg::T2a => RewardTest::T2a,
            TestArg::T2b => RewardTest::T2b,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalPreset {
    /// Test 2b rewards, 100 runs of 200 steps.
    PaperFig6,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepPreset {
    /// Depth 200 m, radii 100..500 m plus sqrt(2) * depth, windows 30 and 300.
    PaperFig4,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file (dotted keys, e.g. `env.depth_m = 15.0`).
    config: PathBuf,
    #[arg(long, value_enum, default_value = "sac-a")]
    algo: AlgoArg,
    /// Reward threshold preset; overrides `env.e_th_m`.
    #[arg(long, value_enum)]
    test: Option<TestArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// `predefined`, or a checkpoint directory / actor file.
    #[arg(long)]
    policy: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    depth: Option<f64>,
    /// Loop radius of the predefined path; defaults to sqrt(2) * depth.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<EvalPreset>,
    #[arg(long, value_enum)]
    test: Option<TestArg>,
    /// Label stored in the metrics file.
    #[arg(long)]
    id: Option<String>,
    /// Metrics files to report probability of improvement against.
    #[arg(long)]
    vs: Vec<PathBuf>,
    #[arg(long, default_value = "out/eval")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value = "out/compare")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    depth: Option<f64>,
    /// Comma-separated loop radii in metres.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Estimator window(s); comma-separated for several series.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Distance between pings in metres.
    #[arg(long, default_value_t = 30.0)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    preset: Option<SweepPreset>,
    #[arg(long, default_value = "out/sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// `learning_curve.csv` written by `train`.
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, default_value_t = 1000)]
    window: usize,
    #[arg(long, default_value = "out/export")]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest file or the directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_VAR) {
        Some(root) if out.is_relative() => Path::new(&root).join(out),
        _ => out.to_path_buf(),
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn train_job(a: TrainArgs) -> Result<(Job, PathBuf), CliError> {
    let file = FileConfig::load(&a.config)?;
    let mut env = file.env;
    let mut train = file.train;
    if let Some(t) = a.test {
        env = env.with_test(t.into());
    }
    if let Some(e) = a.episodes {
        train.episodes = e;
    }
    let job = Job::Train {
        algo: a.algo.into(),
        seed: a.seed,
        env,
        train,
    };
    Ok((job, a.out))
}

fn eval_job(a: EvalArgs) -> Result<(Job, PathBuf), CliError> {
    let file = FileConfig::load_opt(a.config.as_deref())?;
    let mut env = file.env;
    let mut runs = 100;
    if let Some(EvalPreset::PaperFig6) = a.preset {
        env = env.with_test(RewardTest::T2b);
        env.max_steps = 200;
    }
    if let Some(t) = a.test {
        env = env.with_test(t.into());
    }
    if let Some(d) = a.depth {
        env.depth_m = d;
    }
    if let Some(r) = a.runs {
        runs = r;
    }
    let (policy, default_id) = if a.policy == "predefined" {
        let mut b = BaselineConfig::for_depth(env.depth_m);
        if let Some(r) = a.radius {
            b.radius_m = r;
        }
        (PolicySpec::Predefined(b), "predefined".to_string())
    } else {
        let path = absolute(Path::new(&a.policy))?;
        (PolicySpec::Checkpoint { path }, a.policy.clone())
    };
    let vs = a.vs.iter().map(|p| absolute(p)).collect::<Result<_, _>>()?;
    let job = Job::Eval {
        policy,
        policy_id: a.id.unwrap_or(default_id),
        runs,
        seed: a.seed,
        env,
        vs,
    };
    Ok((job, a.out))
}

fn sweep_job(a: SweepArgs) -> Result<(Job, PathBuf), CliError> {
    let (mut depth_m, mut radii_m, mut windows) = (200.0, Vec::new(), vec![30]);
    if let Some(SweepPreset::PaperFig4) = a.preset {
        radii_m = (2..=10).map(|i| 50.0 * f64::from(i)).collect();
        radii_m.push((2.0f64.sqrt() * depth_m).round());
        radii_m.sort_by(f64::total_cmp);
        windows = vec![30, 300];
    }
    if let Some(d) = a.depth {
        depth_m = d;
    }
    if let Some(r) = a.radii {
        radii_m = r;
    }
    if let Some(w) = a.window {
        windows = w;
    }
    if radii_m.is_empty() {
        return Err(CliError::Usage(
            "--radii is required (or use --preset)".into(),
        ));
    }
    let job = Job::Sweep {
        depth_m,
        radii_m,
        windows,
        runs: a.runs,
        step_m: a.step,
        noise_sigma_m: 1.0,
        noise_epsilon_frac: 0.01,
        seed: a.seed,
    };
    Ok((job, a.out))
}

fn execute(job: Job, out: &Path, exec: Exec) -> Result<(), CliError> {
    job.validate()?;
    let out = resolve_out(out);
    let mut manifest = RunManifest::new(job, &out);
    manifest.outputs = manifest.job.run(&out, exec)?;
    manifest.finished_unix_s = manifest::unix_now();
    manifest.save()?;
    for f in &manifest.outputs {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let (job, out) = match cli.cmd {
        Cmd::Train(a) => train_job(a)?,
        Cmd::Eval(a) => eval_job(a)?,
        Cmd::Compare(a) => (
            Job::Compare {
                a: absolute(&a.a)?,
                b: absolute(&a.b)?,
            },
            a.out,
        ),
        Cmd::Sweep(a) => sweep_job(a)?,
        Cmd::Export(a) => (
            Job::Export {
                curve: absolute(&a.curve)?,
                window: a.window,
            },
            a.out,
        ),
        Cmd::Rerun(a) => (RunManifest::load(&a.manifest)?.job, a.out),
    };
    execute(job, &out, exec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rosb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
