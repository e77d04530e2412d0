//! Training: weighted loss, Adam with a plateau schedule, augmentation,
//! checkpointing and the A/B/C cascade.

pub mod augment;
pub mod cascade;
pub mod checkpoint;
pub mod dataset;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod stage;

pub use augment::{augment, AugmentPolicy};
pub use cascade::{
    checkpoint_name, epoch_log_name, run_cascade, train_stage_c, write_stage, CascadeConfig, CascadeOutcome, CascadePlan,
    FoldData, FoldOutcome,
};
pub use checkpoint::{Checkpoint, CheckpointMeta, Stage};
pub use dataset::{predict, predict_logits, DiskSource, ImageSource, LabeledSet, MemorySource};
pub use gradcheck::{loss_gradient_check, relative_error, GradCheckReport, GRAD_FLOOR};
pub use loss::{batch_loss, compute_class_weights, weighted_bce, ClassWeights};
pub use optim::{Adam, PlateauSchedule};
pub use stage::{train_stage, write_epoch_csv, EpochLog, StageOutcome, StageSpec, TrainConfig};
