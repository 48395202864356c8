use std::path::Path;

use rosb_core::env::EnvConfig;
use rosb_core::rl::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Contents of a config file. Keys are dotted (`env.depth_m = 200`) or
/// grouped in `[env]` / `[train]` tables; anything omitted keeps its
/// built-in default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
