//! Experiment configuration: a versioned TOML document.
//!
//! Every table is optional and falls back to the defaults below; unknown keys
//! are rejected. The top-level `seed` is applied to every stage and to the
//! desk data generator.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxrcascade::desk::DeskConfig;
use cxrcascade::imgprep::PrepConfig;
use cxrcascade::model::BackboneSpec;
use cxrcascade::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default = "BackboneSpec::dense121")]
    pub backbone: BackboneSpec,
    #[serde(default)]
    pub stages: StagePlan,
    #[serde(default)]
    pub stage_a: TrainConfig,
    #[serde(default)]
    pub stage_bc: TrainConfig,
    #[serde(default)]
    pub folds: FoldSettings,
    #[serde(default)]
    pub desk: DeskConfig,
    #[serde(default)]
    pub cam: CamSettings,
}

/// Locations of the real collections; only needed outside desk mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub jsrt_root: Option<PathBuf>,
    pub jsrt_metadata: Option<PathBuf>,
    pub chestxray14_root: Option<PathBuf>,
    pub chestxray14_labels: Option<PathBuf>,
}

/// Stages run by `train --stage cascade`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StagePlan {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self { a: true, b: true, c: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSettings {
    pub k: usize,
    pub train_ratio: f64,
    pub validation_ratio: f64,
}

impl Default for FoldSettings {
    fn default() -> Self {
        Self {
            k: 10,
            train_ratio: 8.0,
            validation_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CamSettings {
    pub alpha: f64,
}

impl Default for CamSettings {
    fn default() -> Self {
        Self {
            alpha: cxrcascade::cam::DEFAULT_ALPHA,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            out: None,
            data: DataPaths::default(),
            prep: PrepConfig::default(),
            backbone: BackboneSpec::dense121(),
            stages: StagePlan::default(),
            stage_a: TrainConfig::default(),
            stage_bc: TrainConfig::default(),
            folds: FoldSettings::default(),
            desk: DeskConfig::default(),
            cam: CamSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (this build reads version {SCHEMA_VERSION})",
                cfg.schema_version
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Applies the command-line overrides and spreads the seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if out.is_some() {
            self.out = out;
        }
        self.stage_a.seed = self.seed;
        self.stage_bc.seed = self.seed;
        self.desk = self.desk.with_seed(self.seed);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.prep.validate()?;
        self.backbone.validate()?;
        self.desk.backbone.validate()?;
        self.stage_a.validate().context("stage_a")?;
        self.stage_bc.validate().context("stage_bc")?;
        self.desk.stage_a.validate().context("desk.stage_a")?;
        self.desk.stage_bc.validate().context("desk.stage_bc")?;
        if self.prep.target_size != self.backbone.input_size {
            bail!(
                "prep.target_size {} differs from backbone.input_size {}",
                self.prep.target_size,
                self.backbone.input_size
            );
        }
        if !(0.0..=1.0).contains(&self.cam.alpha) {
            bail!("cam.alpha {} outside [0, 1]", self.cam.alpha);
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("schema_version = 1").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("schema_version = 1\n[stage_a]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(format!("{err:#}").contains("learning_rate"), "{err:#}");
        let err = ExperimentConfig::from_toml_str("schema_version = 1\nsed = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("sed"), "{err:#}");
    }

    #[test]
    fn schema_version_required_and_checked() {
        assert!(ExperimentConfig::from_toml_str("seed = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("schema_version = 2").is_err());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let cfg = ExperimentConfig::default().resolve(Some(9), None).unwrap();
        assert_eq!(cfg.stage_a.seed, 9);
        assert_eq!(cfg.stage_bc.seed, 9);
        assert_eq!(cfg.desk.seed, 9);
        assert_eq!(cfg.desk.stage_a.seed, 9);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default().resolve(Some(4), Some("x".into())).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
