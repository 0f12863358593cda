//! Pipeline configuration.
//!
//! Config files are TOML with flat dotted keys, e.g.
//!
//! ```toml
//! group_size = 7
//! group_overlap = 2
//! tracker.tau = 0.6
//! assoc.seed = 42
//! refine.A_deg = 45.0
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmParams;
use crate::hdp::AssocParams;
use crate::refine::RefineParams;
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Keyframes per group (M).
    pub group_size: usize,
    /// Keyframes shared by adjacent groups (j).
    pub group_overlap: usize,
    pub tracker: TrackerParams,
    pub gmm: GmmParams,
    pub assoc: AssocParams,
    pub refine: RefineParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            group_size: 7,
            group_overlap: 2,
            tracker: TrackerParams::default(),
            gmm: GmmParams::default(),
            assoc: AssocParams::default(),
            refine: RefineParams::default(),
        }
    }
}

impl PipelineConfig {
    /// The per-keyframe baseline: M = 1, j = 0, everything else unchanged.
    pub fn flat(mut self) -> Self {
        self.group_size = 1;
        self.group_overlap = 0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.assoc.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 1 || self.group_overlap >= self.group_size {
            return Err(Error::config(format!(
                "need group_size >= 1 and group_overlap < group_size, got {} / {}",
                self.group_size, self.group_overlap
            )));
        }
        self.tracker.validate()?;
        self.gmm.base_covariance()?;
        self.assoc.validate()?;
        self.refine.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}
