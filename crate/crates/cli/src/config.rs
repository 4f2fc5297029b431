//! Optional TOML run configuration; command-line flags override it.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::fail::{CliError, CliResult};

/// Mirror of the flag surface. Every field is optional; a missing entry
/// falls back to the flag or the built-in default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub net: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub backbones: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub classes: Option<Vec<usize>>,
    pub limit: Option<usize>,
    pub widths: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub r: Option<usize>,
    pub lambda: Option<f64>,
    pub delta: Option<usize>,
    pub gamma: Option<usize>,
    pub p1: Option<usize>,
    pub p2: Option<usize>,
    pub universe_cap: Option<usize>,
    pub swarm: Option<usize>,
    pub iterations: Option<usize>,
    pub inertia: Option<f64>,
    pub cognitive: Option<f64>,
    pub social: Option<f64>,
    pub fraction: Option<f64>,
    pub shape: Option<String>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::format(format!("config {}: {e}", path.display())))
    }
}

/// Flag wins, then config, then default.
pub fn pick<T: Clone>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Flag wins, then config; error when both are absent.
pub fn require<T: Clone>(flag: Option<T>, config: Option<T>, what: &str) -> CliResult<T> {
    flag.or(config)
        .ok_or_else(|| CliError::usage(format!("missing required --{what} (flag or config)")))
}
