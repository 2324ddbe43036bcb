//! The TOML run configuration. Every field has a default, so an empty
//! file (or none) is valid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{GenericColumns, PipelineConfig};
use crate::laws::DEFAULT_GAMMA;
use crate::overlap::{JaccardVariant, OverlapMetric};
use crate::rerank::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapConfig {
    pub metrics: Vec<OverlapMetric>,
    pub jaccard: JaccardVariant,
    pub prune: bool,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        Self {
            metrics: OverlapMetric::ALL.to_vec(),
            jaccard: JaccardVariant::Similarity,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmcConfig {
    /// Candidates per trajectory; the whole vocabulary when absent.
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawsConfig {
    pub gamma: f64,
    /// Fit gamma on the training split instead of using `gamma`.
    pub fit_gamma: bool,
}

impl Default for LawsConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            fit_gamma: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub generic: GenericColumns,
    pub overlap: OverlapConfig,
    pub eval: EvalConfig,
    pub mmc: MmcConfig,
    pub laws: LawsConfig,
    pub rerank: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.rerank.validate()?;
        if self.eval.k == 0 {
            return Err(Error::input("eval.k must be at least 1"));
        }
        if self.overlap.metrics.is_empty() {
            return Err(Error::input("overlap.metrics must not be empty"));
        }
        if self.mmc.depth == Some(0) {
            return Err(Error::input("mmc.depth must be at least 1"));
        }
        if !(self.laws.gamma.is_finite() && self.laws.gamma > 0.0) {
            return Err(Error::input("laws.gamma must be positive"));
        }
        Ok(())
    }

    /// Canonical JSON, used for the config digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
