//! The two collections of an experiment, from disk or synthesized in desk mode.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cxrcascade::data::split::{make_folds, split_grouped, FoldPlan, GroupingKey, SplitSizes, SplitSpec};
use cxrcascade::data::{load_chestxray14_manifest, load_jsrt_manifest, Manifest, SampleRecord, Task, TaskLabeling};
use cxrcascade::desk::{desk_data, DeskConfig};
use cxrcascade::imgprep::io::load_image;
use cxrcascade::imgprep::{PrepConfig, RawImage};
use cxrcascade::train::{DiskSource, FoldData, ImageSource, LabeledSet};

use crate::config::ExperimentConfig;
use crate::run::sha256_hex;

/// Where the source-resolution rasters live.
pub enum RawStore {
    Memory(Vec<RawImage>),
    Disk(PathBuf),
}

/// One labeled collection with its prepared-image source.
pub struct Collection {
    pub dataset: String,
    pub manifest: Manifest,
    pub raws: RawStore,
    pub source: Arc<dyn ImageSource>,
    pub labels: Vec<u8>,
    pub task: Task,
}

impl Collection {
    pub fn from_disk(dataset: &str, manifest: Manifest, root: &Path, task: Task, prep: &PrepConfig) -> Result<Self> {
        let labels = manifest.labels(&TaskLabeling::new(task))?;
        let paths = manifest.records().iter().map(|r| r.resolve(root)).collect();
        Ok(Self {
            dataset: dataset.into(),
            manifest,
            raws: RawStore::Disk(root.to_path_buf()),
            source: Arc::new(DiskSource::new(paths, prep.clone())),
            labels,
            task,
        })
    }

    pub fn raw(&self, i: usize) -> Result<RawImage> {
        match &self.raws {
            RawStore::Memory(v) => v.get(i).cloned().context("image index out of range"),
            RawStore::Disk(root) => {
                let path = self.manifest.records()[i].resolve(root);
                Ok(load_image(&path)?)
            }
        }
    }

    pub fn record(&self, i: usize) -> &SampleRecord {
        &self.manifest.records()[i]
    }

    pub fn select(&self, indices: &[usize]) -> Result<LabeledSet> {
        Ok(LabeledSet::select(self.source.clone(), indices, &self.labels)?)
    }

    /// Digest of the manifest and, for synthesized data, of every pixel.
    pub fn digest(&self) -> Result<String> {
        let mut bytes = self.manifest.to_csv_string()?.into_bytes();
        if let RawStore::Memory(images) = &self.raws {
            for img in images {
                bytes.extend(img.data().iter().flat_map(|v| v.to_le_bytes()));
            }
        }
        Ok(sha256_hex(&bytes))
    }

    pub fn purpose(&self) -> &'static str {
        purpose(self.task)
    }
}

pub fn purpose(task: Task) -> &'static str {
    match task {
        Task::NoduleVsNonnodule => "nodule vs non-nodule",
        Task::MalignantVsNonmalignant => "malignant vs non-malignant",
    }
}

pub struct Stage1 {
    pub collection: Collection,
    pub split: SplitSpec,
}

impl Stage1 {
    pub fn part_train(&self) -> Result<LabeledSet> {
        self.part(Part::Train)
    }

    pub fn part_validation(&self) -> Result<LabeledSet> {
        self.part(Part::Validation)
    }

    pub fn part(&self, part: Part) -> Result<LabeledSet> {
        self.collection.select(part.pick(&self.split))
    }
}

pub struct Stage2 {
    pub collection: Collection,
    pub folds: FoldPlan,
}

impl Stage2 {
    pub fn fold(&self, f: usize) -> Result<&SplitSpec> {
        self.folds
            .folds
            .get(f)
            .with_context(|| format!("fold {f} requested but the plan has {} folds", self.folds.folds.len()))
    }

    pub fn fold_data(&self) -> Result<Vec<FoldData>> {
        self.folds
            .folds
            .iter()
            .map(|f| {
                Ok(FoldData {
                    train: self.collection.select(&f.train)?,
                    validation: self.collection.select(&f.validation)?,
                    test: self.collection.select(&f.test)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl Part {
    pub fn pick(self, s: &SplitSpec) -> &[usize] {
        match self {
            Part::Train => &s.train,
            Part::Validation => &s.validation,
            Part::Test => &s.test,
        }
    }
}

pub struct Experiment {
    pub stage1: Option<Stage1>,
    pub stage2: Option<Stage2>,
}

/// The desk collections: synthetic data split exactly as the library's
/// desk experiment splits it.
pub fn load_desk(desk: &DeskConfig) -> Result<Experiment> {
    let d = desk_data(desk)?;
    let stage1 = Collection {
        dataset: "synthetic stage 1".into(),
        source: d.plan.stage_a_train.source().clone(),
        labels: d.stage1.manifest.labels(&TaskLabeling::nodule())?,
        manifest: d.stage1.manifest,
        raws: RawStore::Memory(d.stage1.images),
        task: Task::NoduleVsNonnodule,
    };
    let source2 = match d.plan.folds.first() {
        Some(f) => f.train.source().clone(),
        None => bail!("desk configuration produced no folds"),
    };
    let stage2 = Collection {
        dataset: "synthetic stage 2".into(),
        source: source2,
        labels: d.stage2.manifest.labels(&TaskLabeling::malignancy())?,
        manifest: d.stage2.manifest,
        raws: RawStore::Memory(d.stage2.images),
        task: Task::MalignantVsNonmalignant,
    };
    Ok(Experiment {
        stage1: Some(Stage1 {
            collection: stage1,
            split: d.stage1_split,
        }),
        stage2: Some(Stage2 {
            collection: stage2,
            folds: d.fold_plan,
        }),
    })
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .with_context(|| format!("`data.{key}` is not set in the config (or use --desk for synthetic data)"))
}

/// The real collections; each is loaded only when asked for.
pub fn load_full(cfg: &ExperimentConfig, need1: bool, need2: bool) -> Result<Experiment> {
    let stage1 = if need1 {
        let root = required(&cfg.data.chestxray14_root, "chestxray14_root")?;
        let labels = required(&cfg.data.chestxray14_labels, "chestxray14_labels")?;
        let manifest = load_chestxray14_manifest(root, labels)?;
        let split = split_grouped(
            &manifest,
            &TaskLabeling::nodule(),
            SplitSizes::CHESTXRAY14_TABLE,
            GroupingKey::Patient,
            cfg.seed,
        )?;
        let collection = Collection::from_disk("ChestX-ray14", manifest, root, Task::NoduleVsNonnodule, &cfg.prep)?;
        Some(Stage1 { collection, split })
    } else {
        None
    };
    let stage2 = if need2 {
        let root = required(&cfg.data.jsrt_root, "jsrt_root")?;
        let meta = required(&cfg.data.jsrt_metadata, "jsrt_metadata")?;
        let manifest = load_jsrt_manifest(root, meta)?;
        let folds = make_folds(
            &manifest,
            &TaskLabeling::malignancy(),
            cfg.folds.k,
            cfg.folds.train_ratio,
            cfg.folds.validation_ratio,
            cfg.seed,
        )?;
        let collection = Collection::from_disk("JSRT", manifest, root, Task::MalignantVsNonmalignant, &cfg.prep)?;
        Some(Stage2 { collection, folds })
    } else {
        None
    };
    Ok(Experiment { stage1, stage2 })
}

impl Experiment {
    pub fn stage1(&self) -> Result<&Stage1> {
        self.stage1.as_ref().context("stage-1 data not loaded")
    }

    pub fn stage2(&self) -> Result<&Stage2> {
        self.stage2.as_ref().context("stage-2 data not loaded")
    }

    /// Manifests and plan files, so every split can be inspected and reused.
    pub fn write_plans(&self, dir: &Path) -> Result<()> {
        if let Some(s) = &self.stage1 {
            s.collection.manifest.write_csv(&dir.join("stage1_manifest.csv"))?;
            s.split.write_json(&s.collection.manifest, &dir.join("stage1_split.json"))?;
        }
        if let Some(s) = &self.stage2 {
            s.collection.manifest.write_csv(&dir.join("stage2_manifest.csv"))?;
            s.folds.write_json(&s.collection.manifest, &dir.join("stage2_folds.json"))?;
        }
        Ok(())
    }

    pub fn digests(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(s) = &self.stage1 {
            out.push(("stage1".into(), s.collection.digest()?));
        }
        if let Some(s) = &self.stage2 {
            out.push(("stage2".into(), s.collection.digest()?));
        }
        Ok(out)
    }
}
