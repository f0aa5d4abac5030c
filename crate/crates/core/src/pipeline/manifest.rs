use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

/// Fixed training and audit constants every reported number depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedSettings {
    pub loss: String,
    pub alpha: f64,
    pub beta: f64,
    pub warp_margin: f64,
    pub max_warp_trials: usize,
    pub init_scale: f64,
    pub n: usize,
    pub folds: usize,
    pub l2_strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub corpus_key: String,
    pub dataset: String,
    pub seed: u64,
    pub started_at: String,
    pub settings: RecordedSettings,
    pub stages: Vec<StageRecord>,
    /// Selected configuration per variant.
    pub selected: BTreeMap<String, String>,
    pub failed_stage: Option<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// Artifacts written by `stage`, if it ran.
    pub fn artifacts_of(&self, stage: &str) -> Option<&[String]> {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .map(|s| s.artifacts.as_slice())
    }
}
