//! Run configuration: one JSON document drives every pipeline command.
//! Artifacts embed the config hash so downstream commands can detect
//! mismatched inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::endpoint::EndpointConfig;
use crate::eval::PROMPT_TEMPLATE_VERSION;
use crate::scene::to_canonical_json;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub scene_count: usize,
    #[serde(default = "default_max_stack")]
    pub max_stack_height: usize,
    #[serde(default = "default_threshold")]
    pub stability_threshold: f64,
    #[serde(default = "default_bins")]
    pub bins: u32,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
    #[serde(default = "default_template_version")]
    pub prompt_template_version: String,
    pub output_dir: PathBuf,
}

fn default_max_stack() -> usize {
    crate::scene::DEFAULT_MAX_OBJECTS
}
fn default_threshold() -> f64 {
    crate::sim::DEFAULT_THRESHOLD
}
fn default_bins() -> u32 {
    crate::context::sp::DEFAULT_BINS
}
fn default_split_ratio() -> f64 {
    0.75
}
fn default_template_version() -> String {
    PROMPT_TEMPLATE_VERSION.to_string()
}

impl RunConfig {
    pub fn new(seed: u64, scene_count: usize, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            seed,
            scene_count,
            max_stack_height: default_max_stack(),
            stability_threshold: default_threshold(),
            bins: default_bins(),
            split_ratio: default_split_ratio(),
            endpoints: BTreeMap::new(),
            prompt_template_version: default_template_version(),
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scene_count < 1 {
            return Err(Error::Config("scene_count must be >= 1".to_string()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.max_stack_height < crate::scene::MIN_OBJECTS {
            return Err(Error::Config(format!(
                "max_stack_height must be >= {}",
                crate::scene::MIN_OBJECTS
            )));
        }
        if self.stability_threshold <= 0.0 {
            return Err(Error::Config("stability_threshold must be > 0".to_string()));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be >= 2".to_string()));
        }
        for (name, endpoint) in &self.endpoints {
            endpoint
                .validate()
                .map_err(|e| Error::Config(format!("endpoint '{name}': {e}")))?;
        }
        Ok(())
    }

    /// Stable hash over the canonical serialization.
    pub fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(&to_canonical_json(self)?))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = std::fs::read(path)?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_canonical_json(self)?)?;
        Ok(())
    }

    /// One-line summary printed by every command.
    pub fn summary(&self) -> String {
        format!(
            "seed={} scenes={} max_stack={} threshold={} bins={} split_ratio={} template={} out={}",
            self.seed,
            self.scene_count,
            self.max_stack_height,
            self.stability_threshold,
            self.bins,
            self.split_ratio,
            self.prompt_template_version,
            self.output_dir.display()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        let config = RunConfig::new(1, 10, "out");
        config.validate().unwrap();
    }

    #[test]
    fn zero_scene_count_is_a_config_error() {
        let config = RunConfig::new(1, 0, "out");
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn split_ratio_bounds_enforced() {
        for ratio in [0.0, 1.0, -0.5, 1.5] {
            let mut config = RunConfig::new(1, 10, "out");
            config.split_ratio = ratio;
            assert!(config.validate().is_err(), "ratio {ratio}");
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = RunConfig::new(1, 10, "out");
        let b = RunConfig::new(1, 10, "out");
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        let mut c = RunConfig::new(1, 10, "out");
        c.seed = 2;
        assert_ne!(a.config_hash().unwrap(), c.config_hash().unwrap());
    }

    #[test]
    fn config_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let config = RunConfig::new(7, 25, "out");
        config.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), config);
    }
}
