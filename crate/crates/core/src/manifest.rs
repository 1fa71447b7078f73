//! Dataset manifest: one entry per scene (or real-world image), with split
//! tags and the generation seed. Artifact files embed the producing config
//! hash so downstream commands can refuse to mix incompatible runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::to_canonical_json;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSplit {
    Train,
    Eval,
    Sim2Real,
}

impl DataSplit {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataSplit::Train => "train",
            DataSplit::Eval => "eval",
            DataSplit::Sim2Real => "sim2real",
        }
    }

    /// Metrics grouping: simulated vs real-world.
    pub fn metrics_group(&self) -> &'static str {
        match self {
            DataSplit::Sim2Real => "real",
            _ => "sim",
        }
    }
}

/// Deterministic train/eval split by scene id hash.
pub fn split_for(scene_id: &str, train_ratio: f64) -> DataSplit {
    let h = derive_seed(0x5117_da7a, scene_id);
    let frac = (h % 1_000_000) as f64 / 1_000_000.0;
    if frac < train_ratio {
        DataSplit::Train
    } else {
        DataSplit::Eval
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub split: DataSplit,
    /// Simulation annotation file; absent for sim2real entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    /// Human-authored QA file; only for sim2real entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qa_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stability_threshold: f64,
    pub sp_bins: u32,
    pub train_ratio: f64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_canonical_json(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let bytes = std::fs::read(path)?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }

    pub fn sim_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split != DataSplit::Sim2Real)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_ratio_is_roughly_honored() {
        let n = 10_000;
        let train = (0..n)
            .filter(|i| split_for(&format!("scene_{i}"), 0.75) == DataSplit::Train)
            .count();
        let frac = train as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "train fraction {frac}");
    }

    #[test]
    fn split_is_deterministic() {
        assert_eq!(split_for("scene_42", 0.75), split_for("scene_42", 0.75));
    }
}
