use std::path::{Path, PathBuf};

use anyhow::Result;
use finbench_core::runner::Overrides;
use serde::{Deserialize, Serialize};

/// Shared settings. Every field can be overridden by the matching flag.
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub manifests: Option<PathBuf>,
    pub prompt_pool: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub adapter: Option<String>,
    pub seed: Option<u64>,
    pub overrides: Overrides,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut config: CliConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.manifests,
            &mut config.prompt_pool,
            &mut config.data_dir,
            &mut config.runs_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}

/// A malformed or unresolvable configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
