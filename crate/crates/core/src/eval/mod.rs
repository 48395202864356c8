//! Batch evaluation and the statistics used to report it.

mod curves;
mod run;
mod stats;
mod sweep;

pub use curves::{rolling_curve, write_rolling_curve, CurvePoint};
pub use run::{
    compare, delta_percent, evaluate, write_comparison_csv, Comparison, EvalPolicy, Evaluation,
    Metrics, RunMatrix, STEADY_STEPS, TRANSIENT_STEPS,
};
pub use stats::{iqm, mean, probability_of_improvement, rms, rolling, std_dev};
pub use sweep::{radius_sweep, write_sweep_csv, SweepConfig, SweepRow};
