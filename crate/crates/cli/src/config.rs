//! JSON run configuration. Flags override file values.

use std::path::Path;

use anyhow::{Context, Result};
use hsbm::mcmc::ChainConfig;
use hsbm::model::Hyperparams;
use hsbm::vb::VbConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub hyperparams: Hyperparams,
    pub mcmc: ChainConfig,
    pub vb: VbConfig,
}

impl FitConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| crate::usage(format!("config {}: {e}", path.display())))
    }
}
