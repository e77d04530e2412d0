//! Desk-scale experiment: synthetic radiographs and a small backbone, sized
//! so the whole cascade runs on a CPU in minutes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::split::{make_folds, split_grouped, FoldPlan, GroupingKey, SplitSizes, SplitSpec};
use crate::data::synthetic::{generate_synthetic_with, SyntheticKind, SyntheticSet, SyntheticSpec};
use crate::data::{Task, TaskLabeling};
use crate::error::Result;
use crate::imgprep::PrepConfig;
use crate::model::{build_model, BackboneKind, BackboneSpec, DeskTinyConfig, Init};
use crate::train::{CascadePlan, Checkpoint, FoldData, ImageSource, LabeledSet, MemorySource, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskConfig {
    pub image_size: usize,
    pub backbone: BackboneSpec,
    pub stage1_positives: usize,
    pub stage1_negatives: usize,
    pub stage2_positives: usize,
    pub stage2_negatives: usize,
    pub folds: usize,
    pub seed: u64,
    pub stage_a: TrainConfig,
    pub stage_bc: TrainConfig,
}

impl Default for DeskConfig {
    fn default() -> Self {
        let stage_a = TrainConfig {
            max_epochs: 30,
            max_steps: Some(200),
            ..TrainConfig::default()
        };
        let stage_bc = TrainConfig {
            max_epochs: 60,
            early_stop_patience: 10,
            ..TrainConfig::default()
        };
        Self {
            image_size: 64,
            backbone: BackboneSpec {
                kind: BackboneKind::DeskTiny(DeskTinyConfig::default()),
                input_size: 64,
                pretrained_weights: None,
            },
            stage1_positives: 100,
            stage1_negatives: 100,
            stage2_positives: 23,
            stage2_negatives: 23,
            folds: 2,
            seed: 0,
            stage_a,
            stage_bc,
        }
    }
}

impl DeskConfig {
    pub fn prep(&self) -> PrepConfig {
        PrepConfig::default().with_target_size(self.backbone.input_size)
    }

    /// Applies one seed to the data and model as well as both training stages.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.stage_a.seed = seed;
        self.stage_bc.seed = seed;
        self
    }
}

pub struct DeskData {
    pub prep: PrepConfig,
    pub stage1: SyntheticSet,
    pub stage1_split: SplitSpec,
    pub stage1_test: LabeledSet,
    pub stage2: SyntheticSet,
    pub fold_plan: FoldPlan,
    pub plan: CascadePlan,
}

fn source(set: &SyntheticSet, prep: &PrepConfig) -> Result<Arc<dyn ImageSource>> {
    let ids = set.manifest.records().iter().map(|r| r.image_id()).collect();
    Ok(Arc::new(MemorySource::from_raw(&set.images, ids, prep)?))
}

/// Generates both synthetic collections, splits stage-1 data 8:1:1 and
/// stage-2 data into stratified folds.
pub fn desk_data(cfg: &DeskConfig) -> Result<DeskData> {
    let prep = cfg.prep();
    let stage1 = generate_synthetic_with(SyntheticSpec {
        kind: SyntheticKind::Nodule,
        n_pos: cfg.stage1_positives,
        n_neg: cfg.stage1_negatives,
        image_size: cfg.image_size,
        seed: cfg.seed,
    });
    let stage2 = generate_synthetic_with(SyntheticSpec {
        kind: SyntheticKind::Malignancy,
        n_pos: cfg.stage2_positives,
        n_neg: cfg.stage2_negatives,
        image_size: cfg.image_size,
        seed: cfg.seed.wrapping_add(1),
    });
    let nodule = TaskLabeling::nodule();
    let malignancy = TaskLabeling::malignancy();
    let split = split_grouped(&stage1.manifest, &nodule, SplitSizes::EIGHT_ONE_ONE, GroupingKey::Patient, cfg.seed)?;
    let fold_plan = make_folds(&stage2.manifest, &malignancy, cfg.folds, 8.0, 1.0, cfg.seed)?;

    let src1 = source(&stage1, &prep)?;
    let labels1 = stage1.manifest.labels(&nodule)?;
    let src2 = source(&stage2, &prep)?;
    let labels2 = stage2.manifest.labels(&malignancy)?;
    let folds = fold_plan
        .folds
        .iter()
        .map(|f| {
            Ok(FoldData {
                train: LabeledSet::select(src2.clone(), &f.train, &labels2)?,
                validation: LabeledSet::select(src2.clone(), &f.validation, &labels2)?,
                test: LabeledSet::select(src2.clone(), &f.test, &labels2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = CascadePlan {
        stage_a_train: LabeledSet::select(src1.clone(), &split.train, &labels1)?,
        stage_a_validation: LabeledSet::select(src1.clone(), &split.validation, &labels1)?,
        folds,
    };
    Ok(DeskData {
        prep,
        stage1_test: LabeledSet::select(src1, &split.test, &labels1)?,
        stage1,
        stage1_split: split,
        stage2,
        fold_plan,
        plan,
    })
}

/// The randomly initialized base model shared by stages A and B.
pub fn desk_base(cfg: &DeskConfig) -> Result<Checkpoint> {
    let model = build_model(&cfg.backbone, Init::Random(cfg.seed))?;
    let mut ck = Checkpoint::new(model, cfg.prep(), Task::NoduleVsNonnodule);
    ck.meta.seed = Some(cfg.seed);
    Ok(ck)
}
