//! Backbone descriptions and the layer stacks built from them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, DenseUnit, Layer, Pool, Sequential};
use crate::error::{Error, Result};

/// Hyperparameters of a densely connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseNetConfig {
    pub growth_rate: usize,
    pub block_config: Vec<usize>,
    pub num_init_features: usize,
    pub bn_size: usize,
}

impl DenseNetConfig {
    /// The 121-layer configuration.
    pub fn dense121() -> Self {
        Self {
            growth_rate: 32,
            block_config: vec![6, 12, 24, 16],
            num_init_features: 64,
            bn_size: 4,
        }
    }

    pub fn feature_channels(&self) -> usize {
        let mut c = self.num_init_features;
        for (i, &n) in self.block_config.iter().enumerate() {
            c += n * self.growth_rate;
            if i + 1 < self.block_config.len() {
                c /= 2;
            }
        }
        c
    }

    pub fn feature_side(&self, input: usize) -> usize {
        // 7x7 stride-2 stem, 3x3 stride-2 max pool, then one 2x2 average pool per transition
        let mut s = (input + 6 - 7) / 2 + 1;
        s = (s + 2 - 3) / 2 + 1;
        for _ in 1..self.block_config.len() {
            s /= 2;
        }
        s
    }
}

/// A small convolutional stack: for each width a 3x3 convolution, optional
/// batch norm, ReLU and 2x2 average pool, then a 3x3 convolution to the
/// feature width with optional batch norm and ReLU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskTinyConfig {
    pub widths: Vec<usize>,
    pub feature_channels: usize,
    #[serde(default)]
    pub batch_norm: bool,
}

impl Default for DeskTinyConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 16],
            feature_channels: 16,
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneKind {
    Dense121,
    /// A densely connected network with a custom configuration.
    Dense(DenseNetConfig),
    DeskTiny(DeskTinyConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub input_size: usize,
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
}

impl BackboneSpec {
    pub fn dense121() -> Self {
        Self {
            kind: BackboneKind::Dense121,
            input_size: 224,
            pretrained_weights: None,
        }
    }

    /// A desk_tiny backbone without batch norm.
    pub fn desk_tiny(input_size: usize, widths: Vec<usize>, feature_channels: usize) -> Self {
        Self {
            kind: BackboneKind::DeskTiny(DeskTinyConfig {
                widths,
                feature_channels,
                batch_norm: false,
            }),
            input_size,
            pretrained_weights: None,
        }
    }

    fn dense_config(&self) -> Option<DenseNetConfig> {
        match &self.kind {
            BackboneKind::Dense121 => Some(DenseNetConfig::dense121()),
            BackboneKind::Dense(c) => Some(c.clone()),
            BackboneKind::DeskTiny(_) => None,
        }
    }

    /// Number of feature maps, K.
    pub fn feature_channels(&self) -> usize {
        match &self.kind {
            BackboneKind::DeskTiny(c) => c.feature_channels,
            _ => self.dense_config().map_or(0, |c| c.feature_channels()),
        }
    }

    /// Spatial size of each feature map, (H_f, W_f).
    pub fn feature_grid(&self) -> (usize, usize) {
        let s = match &self.kind {
            BackboneKind::DeskTiny(c) => self.input_size >> c.widths.len(),
            _ => self.dense_config().map_or(0, |c| c.feature_side(self.input_size)),
        };
        (s, s)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BackboneKind::Dense121 if self.input_size != 224 => Err(Error::InvalidInput(format!(
                "dense121 expects 224-pixel input, got {}",
                self.input_size
            ))),
            BackboneKind::DeskTiny(c) => {
                if c.widths.is_empty() || c.widths.contains(&0) || c.feature_channels == 0 {
                    return Err(Error::InvalidInput("desk_tiny widths and feature_channels must be positive".into()));
                }
                if self.input_size % (1 << c.widths.len()) != 0 {
                    return Err(Error::InvalidInput(format!(
                        "desk_tiny input {} not divisible by 2^{}",
                        self.input_size,
                        c.widths.len()
                    )));
                }
                Ok(())
            }
            BackboneKind::Dense(c) => {
                if c.block_config.is_empty() || c.growth_rate == 0 || c.bn_size == 0 || c.num_init_features == 0 {
                    return Err(Error::InvalidInput("dense configuration values must be positive".into()));
                }
                if self.feature_grid().0 == 0 {
                    return Err(Error::InvalidInput(format!("input {} too small for the network", self.input_size)));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The label used in logs and checkpoint metadata.
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            BackboneKind::Dense121 => "dense121",
            BackboneKind::Dense(_) => "dense",
            BackboneKind::DeskTiny(_) => "desk_tiny",
        }
    }
}

/// Builds the feature extractor with zero-valued parameters.
pub(crate) fn build_backbone(spec: &BackboneSpec) -> Sequential {
    match (&spec.kind, spec.dense_config()) {
        (BackboneKind::DeskTiny(c), _) => build_desk_tiny(c),
        (_, Some(c)) => build_dense(&c),
        _ => unreachable!(),
    }
}

fn build_desk_tiny(cfg: &DeskTinyConfig) -> Sequential {
    let mut s = Sequential::default();
    let mut c_in = 3;
    for (i, &w) in cfg.widths.iter().enumerate() {
        let n = i + 1;
        conv_block(&mut s, n, c_in, w, cfg.batch_norm);
        s.push(
            format!("pool{n}"),
            Layer::AvgPool(Pool {
                kernel: 2,
                stride: 2,
                padding: 0,
            }),
        );
        c_in = w;
    }
    let n = cfg.widths.len() + 1;
    conv_block(&mut s, n, c_in, cfg.feature_channels, cfg.batch_norm);
    s
}

fn conv_block(s: &mut Sequential, n: usize, c_in: usize, c_out: usize, batch_norm: bool) {
    s.push(format!("conv{n}"), Layer::Conv(Conv2d::new(c_in, c_out, 3, 1, 1, !batch_norm)));
    if batch_norm {
        s.push(format!("norm{n}"), Layer::BatchNorm(BatchNorm2d::new(c_out)));
    }
    s.push(format!("relu{n}"), Layer::Relu);
}

fn build_dense(cfg: &DenseNetConfig) -> Sequential {
    let mut s = Sequential::default();
    let mut c = cfg.num_init_features;
    s.push("conv0", Layer::Conv(Conv2d::new(3, c, 7, 2, 3, false)));
    s.push("norm0", Layer::BatchNorm(BatchNorm2d::new(c)));
    s.push("relu0", Layer::Relu);
    s.push(
        "pool0",
        Layer::MaxPool(Pool {
            kernel: 3,
            stride: 2,
            padding: 1,
        }),
    );
    for (b, &n_layers) in cfg.block_config.iter().enumerate() {
        for l in 0..n_layers {
            let inner_c = cfg.bn_size * cfg.growth_rate;
            let mut inner = Sequential::default();
            inner.push("norm1", Layer::BatchNorm(BatchNorm2d::new(c)));
            inner.push("relu1", Layer::Relu);
            inner.push("conv1", Layer::Conv(Conv2d::new(c, inner_c, 1, 1, 0, false)));
            inner.push("norm2", Layer::BatchNorm(BatchNorm2d::new(inner_c)));
            inner.push("relu2", Layer::Relu);
            inner.push("conv2", Layer::Conv(Conv2d::new(inner_c, cfg.growth_rate, 3, 1, 1, false)));
            s.push(
                format!("denseblock{}.denselayer{}", b + 1, l + 1),
                Layer::Dense(DenseUnit { inner }),
            );
            c += cfg.growth_rate;
        }
        if b + 1 < cfg.block_config.len() {
            let t = format!("transition{}", b + 1);
            s.push(format!("{t}.norm"), Layer::BatchNorm(BatchNorm2d::new(c)));
            s.push(format!("{t}.relu"), Layer::Relu);
            s.push(format!("{t}.conv"), Layer::Conv(Conv2d::new(c, c / 2, 1, 1, 0, false)));
            s.push(
                format!("{t}.pool"),
                Layer::AvgPool(Pool {
                    kernel: 2,
                    stride: 2,
                    padding: 0,
                }),
            );
            c /= 2;
        }
    }
    s.push("norm5", Layer::BatchNorm(BatchNorm2d::new(c)));
    s.push("relu5", Layer::Relu);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense121_arithmetic() {
        let spec = BackboneSpec::dense121();
        assert_eq!(spec.feature_channels(), 1024);
        assert_eq!(spec.feature_grid(), (7, 7));
    }

    #[test]
    fn dense121_parameter_names_and_count() {
        let net = build_backbone(&BackboneSpec::dense121());
        let mut names = Vec::new();
        let mut total = 0;
        net.visit_params("features", &mut |n, p| {
            total += p.len();
            names.push(n);
        });
        assert!(names.contains(&"features.conv0.weight".to_string()));
        assert!(names.contains(&"features.denseblock1.denselayer1.norm1.weight".to_string()));
        assert!(names.contains(&"features.denseblock4.denselayer16.conv2.weight".to_string()));
        assert!(names.contains(&"features.transition3.conv.weight".to_string()));
        assert!(names.contains(&"features.norm5.bias".to_string()));
        // torchvision's densenet121 has 7,978,856 parameters, 1,025,000 of them in the classifier
        assert_eq!(total, 7_978_856 - 1_025_000);
    }

    #[test]
    fn desk_tiny_grid() {
        let spec = BackboneSpec::desk_tiny(16, vec![4, 8], 8);
        spec.validate().unwrap();
        assert_eq!(spec.feature_grid(), (4, 4));
        assert_eq!(spec.feature_channels(), 8);
        assert!(BackboneSpec::desk_tiny(18, vec![4, 8], 8).validate().is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = BackboneSpec::desk_tiny(32, vec![4, 8], 8);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<BackboneSpec>(&text).unwrap(), spec);
    }
}
