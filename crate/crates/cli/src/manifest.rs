//! Run manifest written next to every trained model.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kgebm::eval::EpochRecord;
use kgebm::{Preset, TrainConfig};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    /// `train` or `valid`.
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub triples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub tool_version: String,
    pub preset: Preset,
    pub config: TrainConfig,
    /// The config in `key = value` form, accepted by `--config`.
    pub config_text: String,
    pub seed: u64,
    pub datasets: Vec<DatasetRecord>,
    pub model_path: PathBuf,
    pub model_sha256: String,
    pub vocab_path: PathBuf,
    /// Validation MRR is computed every `eval_every` epochs and after the last.
    pub eval_every: usize,
    pub epochs: Vec<EpochRecord>,
    /// Final validation metrics; empty without a validation file.
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| kgebm::Error::Format(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(kgebm::Error::Format(format!("unsupported manifest format {}", m.format)).into());
        }
        Ok(m)
    }
}
