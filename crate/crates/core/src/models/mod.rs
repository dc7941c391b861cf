//! Network constructors: the pooled 1-D CNN, MLP variants, SGAN generator and
//! discriminator, contrastive encoder, sparse autoencoder, plus Grad-CAM.

mod gradcam;

pub use gradcam::{gradcam, gradcam_export_text};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Init, LayerSpec, NnError, Sequential};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature map collapses to length {len} after block {block}")]
    CollapsedFeatureMap { block: usize, len: usize },
    #[error("model has no convolutional layer")]
    NoConvLayer,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_len: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    /// Max-pool window `m`.
    pub pool_size: usize,
    /// Number of conv+pool blocks `n`.
    pub num_conv_blocks: usize,
    pub dense_width: usize,
    pub dropout_p: f64,
    pub negative_slope: f64,
    pub num_classes: usize,
    pub use_batchnorm: bool,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_len: 1392,
            conv_channels: vec![16, 32, 64],
            kernel_sizes: vec![21, 11, 5],
            pool_size: 2,
            num_conv_blocks: 3,
            dense_width: 2048,
            dropout_p: 0.5,
            negative_slope: 0.01,
            num_classes: 2,
            use_batchnorm: false,
        }
    }
}

impl CnnConfig {
    /// Per-block `(channels, kernel)`: the configured lists are truncated to
    /// `n` blocks, or extended by doubling channels (capped at 64) and
    /// repeating the last kernel size.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_conv_blocks);
        for i in 0..self.num_conv_blocks {
            let ch = match self.conv_channels.get(i) {
                Some(&c) => c,
                None => out.last().map_or(16, |&(c, _): &(usize, usize)| (c * 2).min(64)),
            };
            let k = self
                .kernel_sizes
                .get(i)
                .or(self.kernel_sizes.last())
                .copied()
                .unwrap_or(5);
            out.push((ch, k));
        }
        out
    }

    /// Feature-map length after each pooling stage.
    pub fn pooled_lengths(&self) -> Vec<usize> {
        let mut len = self.input_len;
        (0..self.num_conv_blocks)
            .map(|_| {
                len = len.div_ceil(self.pool_size.max(1));
                len
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.use_batchnorm {
            return bad("batch normalization is not supported".into());
        }
        if self.num_conv_blocks == 0 || self.pool_size == 0 {
            return bad("num_conv_blocks and pool_size must be ≥ 1".into());
        }
        if self.num_classes == 0 || self.dense_width == 0 || self.input_len == 0 {
            return bad("num_classes, dense_width and input_len must be ≥ 1".into());
        }
        if self.blocks().iter().any(|&(c, k)| c == 0 || k % 2 == 0) {
            return bad("channels must be ≥ 1 and kernel sizes odd".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p={}", self.dropout_p));
        }
        Ok(())
    }
}

fn conv_blocks(cfg: &CnnConfig) -> Result<(Vec<LayerSpec>, usize), ModelError> {
    cfg.validate()?;
    let mut layers = Vec::new();
    let mut cin = 1;
    let mut len = cfg.input_len;
    for (b, (ch, k)) in cfg.blocks().into_iter().enumerate() {
        layers.push(LayerSpec::Conv1d {
            in_channels: cin,
            out_channels: ch,
            kernel_size: k,
        });
        layers.push(LayerSpec::LeakyRelu {
            negative_slope: cfg.negative_slope,
        });
        layers.push(LayerSpec::MaxPool1d {
            pool_size: cfg.pool_size,
        });
        len = len.div_ceil(cfg.pool_size);
        if len < 1 {
            return Err(ModelError::CollapsedFeatureMap { block: b + 1, len });
        }
        cin = ch;
    }
    Ok((layers, cin * len))
}

/// Dense → Tanh → Dropout → Dense(C) → Softmax.
fn classifier_tail(in_features: usize, dense_width: usize, dropout_p: f64, num_classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            in_features,
            out_features: dense_width,
            init: Init::Xavier,
        },
        LayerSpec::Tanh,
        LayerSpec::Dropout { p: dropout_p },
        LayerSpec::Dense {
            in_features: dense_width,
            out_features: num_classes,
            init: Init::Head,
        },
        LayerSpec::Softmax,
    ]
}

/// Input `[B,1,L]` → `n × {conv, LeakyReLU, maxpool}` → flatten → dense →
/// Tanh → dropout → dense(C) → softmax.
pub fn build_cnn(cfg: &CnnConfig, seed: u64) -> Result<Sequential, ModelError> {
    let (mut layers, flat) = conv_blocks(cfg)?;
    layers.push(LayerSpec::Flatten);
    layers.extend(classifier_tail(flat, cfg.dense_width, cfg.dropout_p, cfg.num_classes));
    Ok(Sequential::new(vec![1, cfg.input_len], layers, seed)?)
}

/// Closed-form parameter count of [`build_cnn`].
pub fn cnn_param_count(cfg: &CnnConfig) -> usize {
    let mut cin = 1;
    let mut total = 0;
    for (ch, k) in cfg.blocks() {
        total += ch * cin * k + ch;
        cin = ch;
    }
    let flat = cin * cfg.pooled_lengths().last().copied().unwrap_or(cfg.input_len);
    total + flat * cfg.dense_width + cfg.dense_width + cfg.dense_width * cfg.num_classes + cfg.num_classes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpPreset {
    Small,
    Mid,
    Large,
}

impl MlpPreset {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            MlpPreset::Small => vec![16, 32, 64],
            MlpPreset::Mid => vec![32, 64, 128],
            MlpPreset::Large => vec![64, 128, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_len: usize,
    pub hidden: Vec<usize>,
    pub dense_width: usize,
    pub dropout_p: f64,
    pub negative_slope: f64,
    pub num_classes: usize,
}

impl MlpConfig {
    pub fn preset(p: MlpPreset, num_classes: usize) -> Self {
        MlpConfig {
            input_len: 1392,
            hidden: p.hidden(),
            dense_width: 2048,
            dropout_p: 0.5,
            negative_slope: 0.01,
            num_classes,
        }
    }
}

/// Flatten → hidden dense layers with LeakyReLU → the CNN classifier tail.
pub fn build_mlp(cfg: &MlpConfig, seed: u64) -> Result<Sequential, ModelError> {
    if cfg.hidden.is_empty() || cfg.hidden.contains(&0) || cfg.num_classes == 0 {
        return Err(ModelError::InvalidConfig("MLP needs nonempty positive hidden widths".into()));
    }
    let mut layers = vec![LayerSpec::Flatten];
    let mut fin = cfg.input_len;
    for &h in &cfg.hidden {
        layers.push(LayerSpec::Dense {
            in_features: fin,
            out_features: h,
            init: Init::Kaiming {
                negative_slope: cfg.negative_slope,
            },
        });
        layers.push(LayerSpec::LeakyRelu {
            negative_slope: cfg.negative_slope,
        });
        fin = h;
    }
    layers.extend(classifier_tail(fin, cfg.dense_width, cfg.dropout_p, cfg.num_classes));
    Ok(Sequential::new(vec![1, cfg.input_len], layers, seed)?)
}

/// Stop index for the logits (everything but a trailing softmax).
pub fn logits_stop(net: &Sequential) -> usize {
    match net.layers().last() {
        Some(LayerSpec::Softmax) => net.layers().len() - 1,
        _ => net.layers().len(),
    }
}

/// Stop index for the penultimate representation (output of the last Tanh).
pub fn feature_stop(net: &Sequential) -> Option<usize> {
    net.layers().iter().rposition(|l| *l == LayerSpec::Tanh).map(|i| i + 1)
}

/// Stop index for the last conv block's activation (conv output after its
/// nonlinearity, before pooling).
pub fn last_conv_stop(net: &Sequential) -> Option<usize> {
    let conv = net.layers().iter().rposition(|l| matches!(l, LayerSpec::Conv1d { .. }))?;
    Some(match net.layers().get(conv + 1) {
        Some(LayerSpec::LeakyRelu { .. } | LayerSpec::Relu | LayerSpec::Tanh) => conv + 2,
        _ => conv + 1,
    })
}

/// Number of layers in the first `blocks` conv blocks (conv, activation, pool).
pub fn conv_block_layers(net: &Sequential, blocks: usize) -> usize {
    let mut seen = 0;
    for (i, l) in net.layers().iter().enumerate() {
        if let LayerSpec::MaxPool1d { .. } = l {
            seen += 1;
            if seen == blocks {
                return i + 1;
            }
        }
    }
    net.layers().len()
}

/// Penultimate (post-Tanh) features in eval mode, `[B, dense_width]`.
pub fn extract_features(net: &Sequential, x: &crate::nn::Tensor) -> Result<crate::nn::Tensor, ModelError> {
    let stop = feature_stop(net).ok_or_else(|| ModelError::InvalidConfig("model has no Tanh feature layer".into()))?;
    Ok(net.infer(x, Some(stop), 64)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SganConfig {
    pub latent_dim: usize,
    /// Discriminator backbone; its `num_classes` is the number of real classes N.
    pub discriminator: CnnConfig,
    /// Channels entering the first transposed-conv stage; halved per stage.
    pub generator_channels: usize,
    pub generator_stages: usize,
    /// Data range the Tanh output is mapped onto.
    pub output_range: (f64, f64),
}

impl Default for SganConfig {
    fn default() -> Self {
        SganConfig {
            latent_dim: 128,
            discriminator: CnnConfig::default(),
            generator_channels: 64,
            generator_stages: 4,
            output_range: (0.0, 1.0),
        }
    }
}

pub struct SganModels {
    pub generator: Sequential,
    pub discriminator: Sequential,
}

/// Generator: latent → dense → reshape `[c, ⌈L/2^s⌉]` → `s` stride-2
/// transposed convs (kernel 4, padding 1) → Tanh → affine to the data range
/// → crop to `L`. Discriminator: CNN with an `N+1`-way head (index `N` is
/// the synthetic class).
pub fn build_sgan(cfg: &SganConfig, seed: u64) -> Result<SganModels, ModelError> {
    let len = cfg.discriminator.input_len;
    let stages = cfg.generator_stages;
    if stages == 0 || cfg.latent_dim == 0 || cfg.generator_channels >> (stages - 1) == 0 {
        return Err(ModelError::InvalidConfig("generator needs ≥1 stage and enough channels".into()));
    }
    let base = len.div_ceil(1 << stages);
    let slope = cfg.discriminator.negative_slope;
    let mut layers = vec![
        LayerSpec::Dense {
            in_features: cfg.latent_dim,
            out_features: cfg.generator_channels * base,
            init: Init::Kaiming { negative_slope: slope },
        },
        LayerSpec::LeakyRelu { negative_slope: slope },
        LayerSpec::Reshape {
            shape: vec![cfg.generator_channels, base],
        },
    ];
    let mut ch = cfg.generator_channels;
    for s in 0..stages {
        let out = if s + 1 == stages { 1 } else { ch / 2 };
        layers.push(LayerSpec::TransposedConv1d {
            in_channels: ch,
            out_channels: out,
            kernel_size: 4,
            stride: 2,
            padding: 1,
        });
        if s + 1 < stages {
            layers.push(LayerSpec::LeakyRelu { negative_slope: slope });
        }
        ch = out;
    }
    let (lo, hi) = cfg.output_range;
    layers.push(LayerSpec::Tanh);
    layers.push(LayerSpec::Affine {
        scale: (hi - lo) / 2.0,
        shift: (hi + lo) / 2.0,
    });
    if base << stages != len {
        layers.push(LayerSpec::Crop { len });
    }
    let generator = Sequential::new(vec![cfg.latent_dim], layers, seed)?;
    let mut dcfg = cfg.discriminator.clone();
    dcfg.num_classes += 1;
    let discriminator = build_cnn(&dcfg, seed.wrapping_add(1))?;
    Ok(SganModels {
        generator,
        discriminator,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub encoder: CnnConfig,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            encoder: CnnConfig::default(),
            projection_hidden: 512,
            projection_dim: 128,
            temperature: 0.5,
        }
    }
}

/// Encoder `f` (CNN backbone through the Tanh feature layer) followed by a
/// two-layer projection `g`. Returns the stack and the encoder's stop index.
pub fn build_contrastive(cfg: &ContrastiveConfig, seed: u64) -> Result<(Sequential, usize), ModelError> {
    if cfg.projection_dim == 0 || cfg.projection_hidden == 0 || !(cfg.temperature > 0.0) {
        return Err(ModelError::InvalidConfig("projection sizes and temperature must be positive".into()));
    }
    let (mut layers, flat) = conv_blocks(&cfg.encoder)?;
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        in_features: flat,
        out_features: cfg.encoder.dense_width,
        init: Init::Xavier,
    });
    layers.push(LayerSpec::Tanh);
    let encoder_stop = layers.len();
    layers.push(LayerSpec::Dense {
        in_features: cfg.encoder.dense_width,
        out_features: cfg.projection_hidden,
        init: Init::Kaiming { negative_slope: 0.0 },
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense {
        in_features: cfg.projection_hidden,
        out_features: cfg.projection_dim,
        init: Init::Xavier,
    });
    let net = Sequential::new(vec![1, cfg.encoder.input_len], layers, seed)?;
    Ok((net, encoder_stop))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub input_len: usize,
    pub hidden: usize,
    pub latent_dim: usize,
    /// L1 coefficient on the latent code.
    pub sparsity: f64,
    pub negative_slope: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            input_len: 1392,
            hidden: 512,
            latent_dim: 256,
            sparsity: 1e-3,
            negative_slope: 0.01,
        }
    }
}

/// Dense encoder `L → hidden → latent` and mirrored decoder; output has the
/// input's `[1, L]` shape. Returns the stack and the latent stop index.
pub fn build_autoencoder(cfg: &AutoencoderConfig, seed: u64) -> Result<(Sequential, usize), ModelError> {
    if cfg.hidden == 0 || cfg.latent_dim == 0 || cfg.sparsity < 0.0 {
        return Err(ModelError::InvalidConfig("autoencoder widths must be positive, sparsity ≥ 0".into()));
    }
    let k = Init::Kaiming {
        negative_slope: cfg.negative_slope,
    };
    let act = LayerSpec::LeakyRelu {
        negative_slope: cfg.negative_slope,
    };
    let dense = |i, o, init| LayerSpec::Dense {
        in_features: i,
        out_features: o,
        init,
    };
    let layers = vec![
        LayerSpec::Flatten,
        dense(cfg.input_len, cfg.hidden, k),
        act.clone(),
        dense(cfg.hidden, cfg.latent_dim, k),
        act.clone(),
        dense(cfg.latent_dim, cfg.hidden, k),
        act,
        dense(cfg.hidden, cfg.input_len, Init::Xavier),
        LayerSpec::Reshape {
            shape: vec![1, cfg.input_len],
        },
    ];
    Ok((Sequential::new(vec![1, cfg.input_len], layers, seed)?, 5))
}

/// Head-only classifier on precomputed features.
pub fn build_linear_head(in_features: usize, num_classes: usize, seed: u64) -> Result<Sequential, ModelError> {
    Ok(Sequential::new(
        vec![in_features],
        vec![
            LayerSpec::Dense {
                in_features,
                out_features: num_classes,
                init: Init::Head,
            },
            LayerSpec::Softmax,
        ],
        seed,
    )?)
}

/// The CNN classifier tail on precomputed features.
pub fn build_feature_classifier(
    in_features: usize,
    dense_width: usize,
    dropout_p: f64,
    num_classes: usize,
    seed: u64,
) -> Result<Sequential, ModelError> {
    Ok(Sequential::new(
        vec![in_features],
        classifier_tail(in_features, dense_width, dropout_p, num_classes),
        seed,
    )?)
}
