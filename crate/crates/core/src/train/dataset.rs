//! Labeled image collections feeding training and evaluation.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgprep::{finalize, io::load_image, prepare_gray, Image, PrepConfig, RawImage};
use crate::model::ClassifierModel;

/// Yields resized single-channel images scaled to `[0, 1]`, the form on
/// which augmentation operates.
pub trait ImageSource: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gray(&self, i: usize) -> Result<Image>;

    fn id(&self, i: usize) -> String;
}

/// Images prepared once and held in memory.
#[derive(Debug, Clone)]
pub struct MemorySource {
    images: Vec<Image>,
    ids: Vec<String>,
}

impl MemorySource {
    pub fn new(images: Vec<Image>, ids: Vec<String>) -> Result<Self> {
        if images.len() != ids.len() {
            return Err(Error::InvalidInput(format!("{} images with {} ids", images.len(), ids.len())));
        }
        Ok(Self { images, ids })
    }

    pub fn from_raw(raws: &[RawImage], ids: Vec<String>, prep: &PrepConfig) -> Result<Self> {
        let images = raws.par_iter().map(|r| prepare_gray(r, prep)).collect::<Result<Vec<_>>>()?;
        Self::new(images, ids)
    }
}

impl ImageSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn gray(&self, i: usize) -> Result<Image> {
        Ok(self.images[i].clone())
    }

    fn id(&self, i: usize) -> String {
        self.ids[i].clone()
    }
}

/// Images read and prepared from disk on every access.
#[derive(Debug, Clone)]
pub struct DiskSource {
    paths: Vec<PathBuf>,
    prep: PrepConfig,
}

impl DiskSource {
    pub fn new(paths: Vec<PathBuf>, prep: PrepConfig) -> Self {
        Self { paths, prep }
    }
}

impl ImageSource for DiskSource {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn gray(&self, i: usize) -> Result<Image> {
        prepare_gray(&load_image(&self.paths[i])?, &self.prep)
    }

    fn id(&self, i: usize) -> String {
        self.paths[i]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// A labeled selection of images from a shared source.
#[derive(Clone)]
pub struct LabeledSet {
    source: Arc<dyn ImageSource>,
    indices: Vec<usize>,
    labels: Vec<u8>,
}

impl std::fmt::Debug for LabeledSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledSet")
            .field("indices", &self.indices)
            .field("labels", &self.labels)
            .finish()
    }
}

impl LabeledSet {
    /// `labels[j]` belongs to source image `indices[j]`.
    pub fn new(source: Arc<dyn ImageSource>, indices: Vec<usize>, labels: Vec<u8>) -> Result<Self> {
        if indices.len() != labels.len() {
            return Err(Error::InvalidInput(format!("{} indices with {} labels", indices.len(), labels.len())));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= source.len()) {
            return Err(Error::InvalidInput(format!("index {i} outside a source of {}", source.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidInput(format!("label must be 0 or 1, got {y}")));
        }
        Ok(Self { source, indices, labels })
    }

    /// Every image of the source, labeled in order.
    pub fn whole(source: Arc<dyn ImageSource>, labels: Vec<u8>) -> Result<Self> {
        let idx = (0..source.len()).collect();
        Self::new(source, idx, labels)
    }

    /// Selects source images by index, taking labels from a full-length list.
    pub fn select(source: Arc<dyn ImageSource>, indices: &[usize], all_labels: &[u8]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| all_labels.get(i).copied().ok_or_else(|| Error::InvalidInput(format!("no label for {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, indices.to_vec(), labels)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn source(&self) -> &Arc<dyn ImageSource> {
        &self.source
    }

    pub fn gray(&self, j: usize) -> Result<Image> {
        self.source.gray(self.indices[j])
    }

    pub fn id(&self, j: usize) -> String {
        self.source.id(self.indices[j])
    }

    /// (positives, negatives)
    pub fn counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (pos, self.labels.len() - pos)
    }
}

/// Inference-mode logits for every image of a set, in order.
pub fn predict_logits(model: &ClassifierModel, set: &LabeledSet, prep: &PrepConfig, batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    let positions: Vec<usize> = (0..set.len()).collect();
    for chunk in positions.chunks(batch_size.max(1)) {
        let images = chunk
            .par_iter()
            .map(|&j| finalize(&set.gray(j)?, prep))
            .collect::<Result<Vec<_>>>()?;
        out.extend(model.logits(&ClassifierModel::batch(&images)?)?);
    }
    Ok(out)
}

/// Inference-mode probabilities for every image of a set, in order.
pub fn predict(model: &ClassifierModel, set: &LabeledSet, prep: &PrepConfig, batch_size: usize) -> Result<Vec<f64>> {
    Ok(predict_logits(model, set, prep, batch_size)?
        .into_iter()
        .map(|z| crate::model::sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
        .collect())
}
