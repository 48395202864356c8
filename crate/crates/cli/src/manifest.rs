use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::jobs::{write_json, Job};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub code_version: String,
    /// The effective configuration after applying defaults, file and flags.
    pub job: Job,
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(job: Job, out_dir: &Path) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            job,
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        }
    }

    pub fn save(&self) -> Result<(), CliError> {
        write_json(&self.out_dir.join(MANIFEST_FILE), self)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file)
            .map_err(|e| CliError::Data(format!("cannot read manifest {}: {e}", file.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("invalid manifest {}: {e}", file.display())))
    }
}
