//! The two-hop cascade: A learns nodule recognition from the base model; per
//! fold, B learns malignancy from the base model and C learns it from A.

use std::path::Path;

use super::checkpoint::{Checkpoint, Stage};
use super::dataset::LabeledSet;
use super::stage::{train_stage, write_epoch_csv, StageOutcome, StageSpec, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: LabeledSet,
    pub validation: LabeledSet,
    pub test: LabeledSet,
}

#[derive(Debug, Clone)]
pub struct CascadePlan {
    pub stage_a_train: LabeledSet,
    pub stage_a_validation: LabeledSet,
    pub folds: Vec<FoldData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub stage_a: TrainConfig,
    pub stage_bc: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub b: StageOutcome,
    pub c: StageOutcome,
}

#[derive(Debug, Clone)]
pub struct CascadeOutcome {
    pub base_hash: String,
    pub a: StageOutcome,
    pub folds: Vec<FoldOutcome>,
}

/// File name of a stage checkpoint inside an output directory.
pub fn checkpoint_name(stage: Stage, fold: Option<usize>) -> String {
    match fold {
        Some(f) => format!("model_{stage}_fold{f}.safetensors"),
        None => format!("model_{stage}.safetensors"),
    }
}

/// File name of a stage's epoch log.
pub fn epoch_log_name(stage: Stage, fold: Option<usize>) -> String {
    match fold {
        Some(f) => format!("epochs_{stage}_fold{f}.csv"),
        None => format!("epochs_{stage}.csv"),
    }
}

/// Writes a stage's checkpoint and epoch log into `dir`.
pub fn write_stage(dir: &Path, outcome: &StageOutcome) -> Result<()> {
    let m = &outcome.checkpoint.meta;
    let stage = m
        .stage
        .ok_or_else(|| Error::InvalidInput("checkpoint carries no stage".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    outcome.checkpoint.save(&dir.join(checkpoint_name(stage, m.fold)))?;
    write_epoch_csv(&dir.join(epoch_log_name(stage, m.fold)), &outcome.epochs)
}

/// Stage C for one fold; requires the stage-A checkpoint.
pub fn train_stage_c(
    a: Option<&Checkpoint>,
    fold: usize,
    data: &FoldData,
    cfg: &TrainConfig,
) -> Result<StageOutcome> {
    let a = a.ok_or_else(|| {
        Error::InvalidInput("stage C needs the stage-A checkpoint; run stage A first".into())
    })?;
    train_stage(a, &StageSpec::c(fold), &data.train, &data.validation, cfg)
}

/// Runs A once, then B and C for every fold. When `out` is given, every
/// checkpoint and epoch log is written there as it completes.
pub fn run_cascade(base: &Checkpoint, plan: &CascadePlan, cfg: &CascadeConfig, out: Option<&Path>) -> Result<CascadeOutcome> {
    let a = train_stage(base, &StageSpec::a(), &plan.stage_a_train, &plan.stage_a_validation, &cfg.stage_a)?;
    if let Some(dir) = out {
        write_stage(dir, &a)?;
    }
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (f, data) in plan.folds.iter().enumerate() {
        let b = train_stage(base, &StageSpec::b(f), &data.train, &data.validation, &cfg.stage_bc)?;
        let c = train_stage_c(Some(&a.checkpoint), f, data, &cfg.stage_bc)?;
        if let Some(dir) = out {
            write_stage(dir, &b)?;
            write_stage(dir, &c)?;
        }
        folds.push(FoldOutcome { b, c });
    }
    Ok(CascadeOutcome {
        base_hash: base.hash().to_string(),
        a,
        folds,
    })
}
