//! The run configuration file: one TOML document covering the whole pipeline.
//! Unknown keys are rejected; every run writes its resolved config beside its
//! outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Pooling, TrainConfig};
use crate::env::SpritesConfig;
use crate::mae::{MaeConfig, PretrainSchedule};
use crate::saliency::{KneeRule, PadMode};
use crate::tensor::{Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaliencyConfig {
    pub knee_rule: KneeRule,
    /// Maximal ratio; `None` selects with no budget articulated yet
    /// (mr-estimate fills it in).
    pub mr: f64,
    pub pad_mode: PadMode,
    /// Fixed-K override for ablations (`None` = dynamic-K).
    pub fixed_k: Option<usize>,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        SaliencyConfig { knee_rule: KneeRule::MeanThreshold, mr: 0.2, pad_mode: PadMode::ZeroPad, fixed_k: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvChoice {
    Sprites,
    /// SPEV peer at `external_addr`.
    External,
}

/// Omitted keys and tables resolve to their defaults; unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub env: EnvChoice,
    pub external_addr: Option<String>,
    pub sprites: SpritesConfig,
    pub mae: MaeConfig,
    pub pretrain: PretrainSchedule,
    pub saliency: SaliencyConfig,
    pub train: TrainConfig,
    pub pooling: Pooling,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: "out".into(),
            env: EnvChoice::Sprites,
            external_addr: None,
            sprites: SpritesConfig::default(),
            mae: MaeConfig::toy(),
            pretrain: PretrainSchedule::default(),
            saliency: SaliencyConfig::default(),
            train: TrainConfig::default(),
            pooling: Pooling::Cls,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TensorError::BadSnapshot(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Write the resolved configuration beside a run's outputs.
    pub fn save_resolved(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join("resolved_config.toml"), self.to_toml())?;
        Ok(())
    }

    /// Stable FNV-1a hash of the serialized config, for checkpoint manifests.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_rejects_unknown_keys() {
        let c = RunConfig::default();
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.seed, c.seed);
        assert_eq!(back.mae, c.mae);
        assert_eq!(back.hash(), c.hash());

        let bad = format!("{text}\nbogus_key = 3\n");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn resolved_config_written() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::default();
        c.save_resolved(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap().hash(), c.hash());
    }
}
