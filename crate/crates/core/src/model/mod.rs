//! The classifier: a convolutional backbone whose pooled features feed a
//! single-logit sigmoid head.
//!
//! Parameter names follow the torchvision layout (`features.*` for the
//! backbone, `classifier.weight` / `classifier.bias` for the head) so that
//! published dense-network weight files load directly.

pub mod backbone;
pub mod layers;
pub mod tensor;
pub mod weights;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

pub use backbone::{BackboneKind, BackboneSpec, DenseNetConfig, DeskTinyConfig};
pub use tensor::{Param, Tensor};
pub use weights::NamedTensor;

use crate::error::{Error, Result};
use crate::imgprep::Image;
use layers::{Cache, Layer, Sequential};

const FEATURES: &str = "features";
const HEAD_WEIGHT: &str = "classifier.weight";
const HEAD_BIAS: &str = "classifier.bias";
const HEAD_INIT_STD: f64 = 0.01;

/// How to initialize a new model.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Backbone from the `pretrained_weights` file of the backbone description; fresh seeded head.
    PretrainedImagenet { head_seed: u64 },
    /// Kaiming-normal backbone and small normal head, all from one seed.
    Random(u64),
    /// Every parameter and buffer from a saved state file.
    FromCheckpoint(PathBuf),
}

/// The K pre-pooling activation grids for one image, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub maps: Vec<f64>,
    pub source_input_size: usize,
}

impl FeatureMaps {
    pub fn map(&self, k: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.maps[k * n..(k + 1) * n]
    }

    /// Spatial mean of each map.
    pub fn pooled(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        (0..self.channels).map(|k| self.map(k).iter().sum::<f64>() / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    spec: BackboneSpec,
    pub backbone: Sequential,
    pub head_weight: Param,
    pub head_bias: Param,
}

/// Intermediate values kept from a training-mode forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    layers: Vec<Cache>,
    pooled: Vec<f64>,
    grid: (usize, usize),
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn build_model(spec: &BackboneSpec, init: Init) -> Result<ClassifierModel> {
    spec.validate()?;
    let k = spec.feature_channels();
    let mut model = ClassifierModel {
        spec: spec.clone(),
        backbone: backbone::build_backbone(spec),
        head_weight: Param::zeros(vec![1, k]),
        head_bias: Param::zeros(vec![1]),
    };
    match init {
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model.init_backbone(&mut rng);
            model.init_head(&mut rng);
        }
        Init::PretrainedImagenet { head_seed } => {
            let path = spec
                .pretrained_weights
                .as_ref()
                .ok_or_else(|| Error::Weights("no pretrained weight file configured".into()))?;
            let (tensors, _) = weights::read_tensors(path)?;
            model.load_backbone(&tensors, path)?;
            model.init_head(&mut ChaCha8Rng::seed_from_u64(head_seed));
        }
        Init::FromCheckpoint(path) => {
            let (tensors, _) = weights::read_tensors(&path)?;
            model.load_state(&tensors, &path)?;
        }
    }
    Ok(model)
}

impl ClassifierModel {
    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn feature_channels(&self) -> usize {
        self.head_weight.len()
    }

    fn init_backbone(&mut self, rng: &mut ChaCha8Rng) {
        self.backbone.visit_params_mut(FEATURES, &mut |name, p| {
            if p.shape.len() == 4 {
                let fan_in: usize = p.shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                p.value.iter_mut().for_each(|v| *v = normal.sample(rng));
            } else if name.ends_with(".bias") {
                p.value.iter_mut().for_each(|v| *v = 0.0);
            }
        });
    }

    fn init_head(&mut self, rng: &mut ChaCha8Rng) {
        let normal = Normal::new(0.0, HEAD_INIT_STD).expect("positive std");
        self.head_weight.value.iter_mut().for_each(|v| *v = normal.sample(rng));
        self.head_bias.value[0] = 0.0;
    }

    fn load_backbone(&mut self, tensors: &BTreeMap<String, NamedTensor>, path: &Path) -> Result<()> {
        let mut err = None;
        let mut assign = |name: String, shape: &[usize], dst: &mut [f64]| {
            if err.is_some() {
                return;
            }
            match tensors.get(&name) {
                None => err = Some(format!("{}: missing `{name}`", path.display())),
                Some((s, _)) if s.as_slice() != shape => {
                    err = Some(format!(
                        "{}: `{name}` has shape {s:?}, model expects {shape:?}",
                        path.display()
                    ))
                }
                Some((_, v)) => dst.copy_from_slice(v),
            }
        };
        self.backbone
            .visit_params_mut(FEATURES, &mut |n, p| assign(n, &p.shape.clone(), &mut p.value));
        self.backbone
            .visit_buffers_mut(FEATURES, &mut |n, b| assign(n, &[b.len()], b));
        match err {
            Some(e) => Err(Error::Weights(e)),
            None => Ok(()),
        }
    }

    fn load_state(&mut self, tensors: &BTreeMap<String, NamedTensor>, path: &Path) -> Result<()> {
        self.load_backbone(tensors, path)?;
        let k = self.feature_channels();
        for (name, param, shape) in [
            (HEAD_WEIGHT, &mut self.head_weight, vec![1, k]),
            (HEAD_BIAS, &mut self.head_bias, vec![1]),
        ] {
            match tensors.get(name) {
                Some((s, v)) if *s == shape => param.value.copy_from_slice(v),
                Some((s, _)) => {
                    return Err(Error::Weights(format!(
                        "{}: `{name}` has shape {s:?}, model expects {shape:?}",
                        path.display()
                    )))
                }
                None => return Err(Error::Weights(format!("{}: missing `{name}`", path.display()))),
            }
        }
        Ok(())
    }

    /// All parameters and buffers by name.
    pub fn state(&self) -> BTreeMap<String, NamedTensor> {
        let mut out = BTreeMap::new();
        self.visit_params(&mut |n, p| {
            out.insert(n, (p.shape.clone(), p.value.clone()));
        });
        self.backbone.visit_buffers(FEATURES, &mut |n, b| {
            out.insert(n, (vec![b.len()], b.to_vec()));
        });
        out
    }

    /// Replaces every parameter and buffer from a state map.
    pub fn set_state(&mut self, state: &BTreeMap<String, NamedTensor>) -> Result<()> {
        self.load_state(state, Path::new("<state>"))
    }

    /// Writes the state as an F64 safetensors file.
    pub fn save_state(&self, path: &Path, metadata: Option<std::collections::HashMap<String, String>>) -> Result<()> {
        weights::write_tensors(path, &self.state(), weights::StoreType::F64, metadata)
    }

    /// SHA-256 over every named parameter and buffer, shape included.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, (shape, values)) in self.state() {
            h.update(name.as_bytes());
            for s in shape {
                h.update((s as u64).to_le_bytes());
            }
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Param)) {
        self.backbone.visit_params(FEATURES, f);
        f(HEAD_WEIGHT.into(), &self.head_weight);
        f(HEAD_BIAS.into(), &self.head_bias);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.backbone.visit_params_mut(FEATURES, f);
        f(HEAD_WEIGHT.into(), &mut self.head_weight);
        f(HEAD_BIAS.into(), &mut self.head_bias);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |_, p| p.zero_grad());
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    pub fn head_weights(&self) -> HeadWeights {
        HeadWeights {
            weights: self.head_weight.value.clone(),
            bias: self.head_bias.value[0],
        }
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = self.spec.input_size;
        if x.c != 3 || x.h != s || x.w != s {
            return Err(Error::InvalidInput(format!(
                "model expects 3x{s}x{s} input, got {}x{}x{}",
                x.c, x.h, x.w
            )));
        }
        if x.n == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        Ok(())
    }

    /// Stacks prepared images into a batch tensor.
    pub fn batch(images: &[Image]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let (h, w, c) = first.shape();
        let mut samples = Vec::with_capacity(images.len());
        for img in images {
            if img.shape() != (h, w, c) {
                return Err(Error::Shape(format!(
                    "batch images differ in shape: {:?} vs {:?}",
                    img.shape(),
                    (h, w, c)
                )));
            }
            samples.push(img.data().to_vec());
        }
        Ok(Tensor::stack(c, h, w, samples))
    }

    /// Inference-mode feature maps for a batch, `[n, K, H_f, W_f]`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        Ok(self.backbone.forward_eval(x))
    }

    fn head(&self, feats: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let plane = (feats.h * feats.w) as f64;
        let mut pooled = Vec::with_capacity(feats.n * feats.c);
        let mut logits = Vec::with_capacity(feats.n);
        for s in feats.samples() {
            let p: Vec<f64> = s.chunks(feats.h * feats.w).map(|m| m.iter().sum::<f64>() / plane).collect();
            let z = p.iter().zip(&self.head_weight.value).map(|(a, b)| a * b).sum::<f64>() + self.head_bias.value[0];
            logits.push(z);
            pooled.extend(p);
        }
        (logits, pooled)
    }

    /// Pre-sigmoid outputs in inference mode.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        let f = self.features(x)?;
        Ok(self.head(&f).0)
    }

    /// Probabilities in inference mode, kept strictly inside (0, 1).
    pub fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self
            .logits(x)?
            .into_iter()
            .map(|z| sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
            .collect())
    }

    pub fn forward_images(&self, images: &[Image]) -> Result<Vec<f64>> {
        self.forward(&Self::batch(images)?)
    }

    pub fn extract_features(&self, image: &Image) -> Result<FeatureMaps> {
        let f = self.features(&Self::batch(std::slice::from_ref(image))?)?;
        Ok(FeatureMaps {
            channels: f.c,
            height: f.h,
            width: f.w,
            maps: f.data,
            source_input_size: self.spec.input_size,
        })
    }

    /// Training-mode forward: batch-norm layers use batch statistics and
    /// update their running estimates. Returns logits.
    pub fn forward_train(&mut self, x: Tensor) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let (feats, layers) = self.backbone.forward_train(x);
        let (logits, pooled) = self.head(&feats);
        Ok((
            logits,
            ForwardCache {
                layers,
                pooled,
                grid: (feats.h, feats.w),
            },
        ))
    }

    /// Accumulates parameter gradients given dL/dlogit per sample.
    pub fn backward(&mut self, cache: ForwardCache, dlogits: &[f64]) {
        let k = self.feature_channels();
        let (h, w) = cache.grid;
        let n = dlogits.len();
        let mut gfeat = Tensor::zeros(n, k, h, w);
        let inv = 1.0 / (h * w) as f64;
        for (i, &g) in dlogits.iter().enumerate() {
            self.head_bias.grad[0] += g;
            let pooled = &cache.pooled[i * k..(i + 1) * k];
            for c in 0..k {
                self.head_weight.grad[c] += g * pooled[c];
            }
            let sample = &mut gfeat.data[i * k * h * w..(i + 1) * k * h * w];
            for (c, plane) in sample.chunks_mut(h * w).enumerate() {
                plane.fill(g * self.head_weight.value[c] * inv);
            }
        }
        self.backbone.backward(&cache.layers, gfeat);
    }

    /// True when the backbone holds batch-norm layers, whose training and
    /// inference behaviour differ.
    pub fn has_batch_norm(&self) -> bool {
        fn any_bn(s: &Sequential) -> bool {
            s.layers.iter().any(|(_, l)| match l {
                Layer::BatchNorm(_) => true,
                Layer::Dense(d) => any_bn(&d.inner),
                _ => false,
            })
        }
        any_bn(&self.backbone)
    }
}
