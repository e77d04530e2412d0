//! Resolves which images `eval` and `cam` read for a checkpoint.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cxrcascade::data::split::{FoldPlan, SplitSpec};
use cxrcascade::data::{Manifest, Source, Task};
use cxrcascade::train::{Checkpoint, Stage};

use crate::args::{DataSelection, DeskSet};
use crate::datasets::{load_desk, Collection};
use crate::Context as RunContext;

pub struct Selected {
    pub collection: Collection,
    pub indices: Vec<usize>,
    /// Human-readable description such as `JSRT fold 3 test`.
    pub description: String,
}

/// In desk mode the data a checkpoint was trained on is regenerated from
/// the seed recorded in it.
pub fn select(sel: &DataSelection, ck: &Checkpoint, ctx: &RunContext) -> Result<Selected> {
    if ctx.desk {
        select_desk(sel, ck, ctx)
    } else {
        select_files(sel, ck)
    }
}

fn fold_of(sel: &DataSelection, ck: &Checkpoint) -> Result<usize> {
    sel.fold
        .or(ck.meta.fold)
        .context("the checkpoint records no fold; pass --fold to choose one")
}

fn select_desk(sel: &DataSelection, ck: &Checkpoint, ctx: &RunContext) -> Result<Selected> {
    let seed = ck.meta.seed.unwrap_or(ctx.cfg.seed);
    let mut exp = load_desk(&ctx.cfg.desk.clone().with_seed(seed))?;
    let which = sel.data.unwrap_or(match ck.meta.stage {
        Some(Stage::B) | Some(Stage::C) => DeskSet::Stage2,
        _ => DeskSet::Stage1,
    });
    let part = format!("{:?}", sel.part).to_lowercase();
    Ok(match which {
        DeskSet::Stage1 => {
            let s = exp.stage1.take().context("desk stage-1 data")?;
            Selected {
                indices: sel.part.pick(&s.split).to_vec(),
                description: format!("{} {part}", s.collection.dataset),
                collection: s.collection,
            }
        }
        DeskSet::Stage2 => {
            let s = exp.stage2.take().context("desk stage-2 data")?;
            let f = fold_of(sel, ck)?;
            Selected {
                indices: sel.part.pick(s.fold(f)?).to_vec(),
                description: format!("{} fold {f} {part}", s.collection.dataset),
                collection: s.collection,
            }
        }
    })
}

fn data_task(sel: &DataSelection, manifest: &Manifest, ck: &Checkpoint) -> Task {
    match (sel.task, manifest.source()) {
        (Some(t), _) => t.into(),
        (None, Source::Jsrt) => Task::MalignantVsNonmalignant,
        (None, Source::Chestxray14) => Task::NoduleVsNonnodule,
        (None, Source::Synthetic) => ck.meta.task,
    }
}

fn read_indices(path: &Path, sel: &DataSelection, ck: &Checkpoint) -> Result<(Vec<usize>, String)> {
    let part = format!("{:?}", sel.part).to_lowercase();
    if let Ok(plan) = FoldPlan::read_json(path) {
        let f = fold_of(sel, ck)?;
        let spec = plan
            .folds
            .get(f)
            .with_context(|| format!("fold {f} requested but {} has {} folds", path.display(), plan.folds.len()))?;
        return Ok((sel.part.pick(spec).to_vec(), format!("fold {f} {part}")));
    }
    let spec = SplitSpec::read_json(path).with_context(|| format!("reading split {}", path.display()))?;
    Ok((sel.part.pick(&spec).to_vec(), part))
}

fn select_files(sel: &DataSelection, ck: &Checkpoint) -> Result<Selected> {
    let Some(manifest_path) = &sel.manifest else {
        bail!("--manifest is required without --desk");
    };
    let manifest = Manifest::read_csv(manifest_path)?;
    let root = match &sel.images_root {
        Some(r) => r.clone(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let task = data_task(sel, &manifest, ck);
    let name = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    let (indices, part) = match &sel.split {
        Some(p) => read_indices(p, sel, ck)?,
        None => ((0..manifest.len()).collect(), "all".into()),
    };
    if let Some(&i) = indices.iter().find(|&&i| i >= manifest.len()) {
        bail!("split index {i} outside a manifest of {} records", manifest.len());
    }
    let collection = Collection::from_disk(&name, manifest, &root, task, &ck.meta.prep)?;
    Ok(Selected {
        collection,
        indices,
        description: format!("{name} {part}"),
    })
}
