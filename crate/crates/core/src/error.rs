use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("slant range {slant} is shorter than the target depth {depth}")]
    DegenerateRange { slant: f64, depth: f64 },

    #[error("least-squares solve needs at least 3 measurements, have {0}")]
    InsufficientData(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("network architectures differ")]
    ArchitectureMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment episode is finished; call reset first")]
    EpisodeDone,

    #[error("at least {needed} values required, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("non-finite {what} loss at update {update}; batch dumped to {dump:?}")]
    Diverged {
        what: &'static str,
        update: u64,
        dump: Option<PathBuf>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
