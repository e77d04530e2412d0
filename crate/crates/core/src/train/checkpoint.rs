//! Self-describing checkpoint archives.
//!
//! A checkpoint is a safetensors file holding every parameter and
//! batch-norm buffer as F64, with one metadata entry, `cxrcascade`, whose
//! value is the JSON-encoded [`CheckpointMeta`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::imgprep::PrepConfig;
use crate::model::{build_model, weights, BackboneSpec, ClassifierModel};

const META_KEY: &str = "cxrcascade";
pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
    C,
}

impl Stage {
    /// Decision threshold used when reporting this stage's metrics.
    pub fn eval_threshold(self) -> f64 {
        match self {
            Stage::A => 0.55,
            Stage::B | Stage::C => 0.5,
        }
    }

    pub fn task(self) -> Task {
        match self {
            Stage::A => Task::NoduleVsNonnodule,
            Stage::B | Stage::C => Task::MalignantVsNonmalignant,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::A => "A",
            Stage::B => "B",
            Stage::C => "C",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Stage::A),
            "B" | "b" => Ok(Stage::B),
            "C" | "c" => Ok(Stage::C),
            _ => Err(Error::InvalidInput(format!("unknown stage `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: u32,
    pub backbone: BackboneSpec,
    pub prep: PrepConfig,
    pub task: Task,
    /// `None` for an untrained base model.
    pub stage: Option<Stage>,
    pub fold: Option<usize>,
    pub validation_loss: Option<f64>,
    pub epoch: Option<usize>,
    /// State hash of the checkpoint this one was initialized from.
    pub parent_hash: Option<String>,
    pub param_hash: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: ClassifierModel,
}

impl Checkpoint {
    /// Wraps a model, stamping the current state hash.
    pub fn new(model: ClassifierModel, prep: PrepConfig, task: Task) -> Self {
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT,
            backbone: model.spec().clone(),
            prep,
            task,
            stage: None,
            fold: None,
            validation_loss: None,
            epoch: None,
            parent_hash: None,
            param_hash: model.state_hash(),
            seed: None,
        };
        Self { meta, model }
    }

    pub fn hash(&self) -> &str {
        &self.meta.param_hash
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        let meta: HashMap<String, String> = [(META_KEY.to_string(), serde_json::to_string(&self.meta)?)].into();
        self.model.save_state(path, Some(meta))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (tensors, meta) = weights::read_tensors(path)?;
        let text = meta
            .get(META_KEY)
            .ok_or_else(|| Error::Weights(format!("{} has no checkpoint metadata", path.display())))?;
        let meta: CheckpointMeta = serde_json::from_str(text)?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(Error::Weights(format!(
                "{}: checkpoint format {} (expected {CHECKPOINT_FORMAT})",
                path.display(),
                meta.format
            )));
        }
        let mut model = build_model(&meta.backbone, crate::model::Init::Random(0))?;
        model.set_state(&tensors).map_err(|e| Error::Weights(format!("{}: {e}", path.display())))?;
        if model.state_hash() != meta.param_hash {
            return Err(Error::Weights(format!("{}: parameter hash mismatch", path.display())));
        }
        Ok(Self { meta, model })
    }
}
