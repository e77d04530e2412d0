//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cxrcascade::data::Task;
use serde::{Deserialize, Serialize};

use crate::datasets::Part;

#[derive(Debug, Parser)]
#[command(name = "cxrcascade", version, about = "Cascaded transfer learning for chest X-ray nodule and malignancy classification")]
pub struct Cli {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, applied to data splits and to every training stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use synthetic data and the small backbone.
    #[arg(long, global = true)]
    pub desk: bool,
    /// Worker threads; 1 gives the strict single-worker mode.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Preprocess images into a prepared store.
    Prepare(PrepareArgs),
    /// Train stage A, B, C or the whole cascade.
    Train(TrainArgs),
    /// Evaluate checkpoints on a split.
    Eval(EvalArgs),
    /// Render class activation map overlays.
    Cam(CamArgs),
    /// Repeat a previous run from its run_manifest.json.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Cam(_) => "cam",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PrepareArgs {
    /// Directory of PNG or raw 12-bit `.IMG` files.
    #[arg(long, conflicts_with = "manifest")]
    pub input: Option<PathBuf>,
    /// Manifest CSV whose images are prepared.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Base directory for relative manifest refs.
    #[arg(long)]
    pub images_root: Option<PathBuf>,
    /// Also write the intermediate image of every preparation step.
    #[arg(long)]
    pub debug_stages: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum StageArg {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "C")]
    C,
    #[value(name = "cascade")]
    Cascade,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub stage: StageArg,
    /// Stage-A checkpoint for stage C; defaults to model_A.safetensors in the output directory.
    #[arg(long)]
    pub stage_a: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TaskArg {
    Nodule,
    Malignancy,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Nodule => Task::NoduleVsNonnodule,
            TaskArg::Malignancy => Task::MalignantVsNonmalignant,
        }
    }
}

/// Which desk collection to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum DeskSet {
    Stage1,
    Stage2,
}

/// Where evaluation or CAM images come from when not in desk mode.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataSelection {
    /// Manifest CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Base directory for relative manifest refs.
    #[arg(long)]
    pub images_root: Option<PathBuf>,
    /// Split or fold-plan JSON; without it the whole manifest is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub part: Part,
    /// Fold of a fold plan; defaults to the checkpoint's fold.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Labeling of the data; defaults from the manifest source.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Desk collection; defaults from the checkpoint's stage.
    #[arg(long, value_enum)]
    pub data: Option<DeskSet>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// One or more checkpoints; several are summarized as cross-validation folds.
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    #[command(flatten)]
    pub selection: DataSelection,
    /// Decision threshold; defaults to 0.55 for stage A and 0.5 otherwise.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also evaluate every threshold of the 0.00..1.00 grid.
    #[arg(long)]
    pub sweep: bool,
    /// Evaluate even when the checkpoint task differs from the data task.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CamArgs {
    /// Checkpoint whose head weights produce the maps.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Individual image files.
    #[arg(long, num_args = 1..)]
    pub image: Vec<PathBuf>,
    #[command(flatten)]
    pub selection: DataSelection,
    /// Only images labeled positive.
    #[arg(long)]
    pub positives_only: bool,
    /// At most this many images.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Heatmap weight; defaults to the config's cam.alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Square side of the overlays; defaults to the source resolution.
    #[arg(long)]
    pub display_size: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A run_manifest.json written by an earlier command.
    pub manifest: PathBuf,
}
