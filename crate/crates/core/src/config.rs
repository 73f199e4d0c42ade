//! TOML run configuration. Every field has a default, so an empty file is
//! a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounder::TrainConfig;
use crate::planners::PlannerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_per_task: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { n_per_task: 22, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub cross_level_trials: usize,
    pub cross_level_holdout: f64,
    pub timing_repeats: usize,
    /// Cap on commands timed; all when absent.
    pub timing_max_commands: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { folds: 10, cross_level_trials: 5, cross_level_holdout: 0.1, timing_repeats: 3, timing_max_commands: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
