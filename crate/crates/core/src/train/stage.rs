//! One training stage: mini-batch Adam on the weighted loss under a plateau
//! schedule, keeping the checkpoint with the least validation loss.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentPolicy};
use super::checkpoint::{Checkpoint, Stage};
use super::dataset::{predict_logits, LabeledSet};
use super::loss::{batch_loss, compute_class_weights, ClassWeights};
use super::optim::{Adam, PlateauSchedule};
use crate::error::{Error, Result};
use crate::imgprep::finalize;
use crate::model::ClassifierModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr_initial: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            plateau_factor: 10.0,
            plateau_patience: 1,
            plateau_threshold: 1e-4,
            min_lr: 1e-6,
            max_epochs: 20,
            early_stop_patience: 3,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("train config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_initial > 0.0) || !(self.min_lr > 0.0) || self.min_lr > self.lr_initial {
            return bad("need 0 < min_lr <= lr_initial");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("betas must lie in [0, 1) and adam_eps must be positive");
        }
        if !(self.plateau_factor > 1.0) {
            return bad("plateau_factor must exceed 1");
        }
        if !(0.0..1.0).contains(&self.plateau_threshold) {
            return bad("plateau_threshold must lie in [0, 1)");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSpec {
    pub stage: Stage,
    pub augment: AugmentPolicy,
    pub fold: Option<usize>,
}

impl StageSpec {
    pub fn a() -> Self {
        Self {
            stage: Stage::A,
            augment: AugmentPolicy::HFLIP,
            fold: None,
        }
    }

    pub fn b(fold: usize) -> Self {
        Self {
            stage: Stage::B,
            augment: AugmentPolicy::HFLIP_ROTATE30,
            fold: Some(fold),
        }
    }

    pub fn c(fold: usize) -> Self {
        Self {
            stage: Stage::C,
            ..Self::b(fold)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: f64,
    pub validation_accuracy: f64,
    /// Optimizer steps taken up to the end of this epoch.
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochLog>,
    pub initial_validation_loss: f64,
    pub class_weights: ClassWeights,
}

impl StageOutcome {
    pub fn steps(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.steps)
    }
}

pub fn write_epoch_csv(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

/// Per-sample augmentation seed, independent of thread scheduling.
fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (epoch as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (index as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
}

fn loss_and_accuracy(logits: &[f64], labels: &[u8], w: ClassWeights) -> Result<(f64, f64)> {
    let (loss, _) = batch_loss(logits, labels, w)?;
    let correct = logits.iter().zip(labels).filter(|(&z, &y)| (z >= 0.0) == (y == 1)).count();
    Ok((loss, correct as f64 / labels.len() as f64))
}

/// Trains from `init` and returns the snapshot with the least validation
/// loss. The stage's task and provenance are stamped into the checkpoint;
/// class weights come from the training split.
pub fn train_stage(
    init: &Checkpoint,
    spec: &StageSpec,
    train: &LabeledSet,
    validation: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<StageOutcome> {
    cfg.validate()?;
    if spec.stage == Stage::C && init.meta.stage != Some(Stage::A) {
        return Err(Error::InvalidInput(
            "stage C starts from a stage-A checkpoint; train stage A first".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput(format!("stage {}: empty training split", spec.stage)));
    }
    if validation.is_empty() {
        return Err(Error::InvalidInput(format!("stage {}: empty validation split", spec.stage)));
    }
    let prep = init.meta.prep.clone();
    let (n_pos, n_neg) = train.counts();
    let weights = compute_class_weights(n_pos, n_neg)?;

    let mut model = init.model.clone();
    let val_loss = |m: &ClassifierModel| -> Result<f64> {
        let z = predict_logits(m, validation, &prep, cfg.batch_size)?;
        Ok(batch_loss(&z, validation.labels(), weights)?.0)
    };
    let initial_validation_loss = val_loss(&model)?;
    let stamp = |model: ClassifierModel, loss: f64, epoch: usize| {
        let mut ck = Checkpoint::new(model, prep.clone(), spec.stage.task());
        ck.meta.stage = Some(spec.stage);
        ck.meta.fold = spec.fold;
        ck.meta.validation_loss = Some(loss);
        ck.meta.epoch = Some(epoch);
        ck.meta.parent_hash = Some(init.hash().to_string());
        ck.meta.seed = Some(cfg.seed);
        ck
    };

    let mut best = (initial_validation_loss, 0usize, None::<ClassifierModel>);
    let mut schedule = PlateauSchedule::new(
        cfg.lr_initial,
        cfg.plateau_factor,
        cfg.plateau_patience,
        cfg.plateau_threshold,
        cfg.min_lr,
    );
    let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut steps = 0usize;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let lr = schedule.lr;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let images = batch
                .par_iter()
                .map(|&j| {
                    let mut r = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, epoch, j));
                    finalize(&augment(&train.gray(j)?, spec.augment, &mut r), &prep)
                })
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<u8> = batch.iter().map(|&j| train.labels()[j]).collect();
            let (logits, cache) = model.forward_train(ClassifierModel::batch(&images)?)?;
            let (loss, grad) = batch_loss(&logits, &labels, weights)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "stage {} epoch {epoch} step {}: non-finite loss {loss} at lr {lr}",
                    spec.stage,
                    steps + 1
                )));
            }
            model.zero_grad();
            model.backward(cache, &grad);
            adam.step(&mut model, lr);
            steps += 1;
            loss_sum += loss * labels.len() as f64;
            seen += labels.len();
            correct += logits.iter().zip(&labels).filter(|(&z, &y)| (z >= 0.0) == (y == 1)).count();
        }
        let z = predict_logits(&model, validation, &prep, cfg.batch_size)?;
        let (vloss, vacc) = loss_and_accuracy(&z, validation.labels(), weights)?;
        if !vloss.is_finite() {
            return Err(Error::Training(format!("stage {} epoch {epoch}: non-finite validation loss", spec.stage)));
        }
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            validation_loss: vloss,
            validation_accuracy: vacc,
            steps,
        };
        log::info!(
            "stage {}{} epoch {epoch}: lr {lr:.1e} train loss {:.4} acc {:.3} | val loss {vloss:.4} acc {vacc:.3}",
            spec.stage,
            spec.fold.map(|f| format!(" fold {f}")).unwrap_or_default(),
            log.train_loss,
            log.train_accuracy
        );
        epochs.push(log);

        if best.2.is_none() || vloss < best.0 {
            best = (vloss, epoch, Some(model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        schedule.step(vloss);
        if stale >= cfg.early_stop_patience {
            log::info!("stage {}: early stop after epoch {epoch}", spec.stage);
            break;
        }
    }

    let (loss, epoch, snapshot) = best;
    let checkpoint = stamp(snapshot.unwrap_or(model), loss, epoch);
    Ok(StageOutcome {
        checkpoint,
        epochs,
        initial_validation_loss,
        class_weights: weights,
    })
}
