//! Optional TOML config file. Keys mirror long flag names; an explicit flag
//! always wins over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toxbench_core::models::{ModelKind, ModelSpec};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub model: Option<ModelKind>,
    /// Full model specification used by `train`.
    pub spec: Option<ModelSpec>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub fallback_probability: Option<f64>,
    pub max_batch: Option<usize>,
    pub batch_size: Option<usize>,
    pub concurrency: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub max_attempts: Option<u32>,
    pub registry: Option<String>,
    pub store: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
