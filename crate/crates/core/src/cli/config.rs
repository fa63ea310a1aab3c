use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::read_file;
use crate::error::{Error, Result};
use crate::graph::BuildOptions;
use crate::llm::LlmConfig;
use crate::model::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    /// Start-position stride of the offline trigram extractor.
    pub stride: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub limited_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            limited_sizes: vec![250, 500, 1000],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

/// Declarative run configuration. Command-line flags override file values,
/// which override these defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub llm: LlmConfig,
    pub graph: BuildOptions,
    pub train: TrainConfig,
    pub mock: MockConfig,
    pub eval: EvalConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&read_file(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
