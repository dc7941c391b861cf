use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{Graph, Var};
use super::kernels::conv_transpose1d_out_len;
use super::{NnError, Tensor};

/// Weight initialization scheme for dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Kaiming-uniform with the LeakyReLU gain `√(2/(1+a²))`.
    Kaiming { negative_slope: f64 },
    /// Xavier-uniform, for layers feeding a Tanh.
    Xavier,
    /// `U(±1/√fan_in)`, for classification heads.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1, zero "same" padding, odd kernel. Kaiming init (slope 0.01).
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
    },
    MaxPool1d {
        pool_size: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
        init: Init,
    },
    LeakyRelu {
        negative_slope: f64,
    },
    Relu,
    Tanh,
    Dropout {
        p: f64,
    },
    Softmax,
    TransposedConv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    },
    /// Collapses all per-sample axes into one.
    Flatten,
    /// Per-sample reshape.
    Reshape {
        shape: Vec<usize>,
    },
    /// `scale·x + shift`.
    Affine {
        scale: f64,
        shift: f64,
    },
    /// Keeps the first `len` positions of the last axis.
    Crop {
        len: usize,
    },
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = || NnError::ShapeMismatch(format!("{self:?} cannot take input {input:?}"));
        Ok(match self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => match *input {
                [c, l] if c == *in_channels && kernel_size % 2 == 1 => vec![*out_channels, l],
                _ => return Err(bad()),
            },
            LayerSpec::MaxPool1d { pool_size } => match *input {
                [c, l] if *pool_size >= 1 => vec![c, l.div_ceil(*pool_size)],
                _ => return Err(bad()),
            },
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => match *input {
                [f] if f == *in_features => vec![*out_features],
                _ => return Err(bad()),
            },
            LayerSpec::TransposedConv1d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                padding,
            } => match *input {
                [c, l] if c == *in_channels => {
                    vec![*out_channels, conv_transpose1d_out_len(l, *kernel_size, *stride, *padding).ok_or_else(bad)?]
                }
                _ => return Err(bad()),
            },
            LayerSpec::Flatten => vec![input.iter().product()],
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(bad());
                }
                shape.clone()
            }
            LayerSpec::Crop { len } => {
                let last = *input.last().ok_or_else(bad)?;
                if *len == 0 || *len > last {
                    return Err(bad());
                }
                let mut s = input.to_vec();
                *s.last_mut().unwrap() = *len;
                s
            }
            _ => input.to_vec(),
        })
    }

    /// Shapes of `(weight, bias)` for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => Some((vec![out_channels, in_channels, kernel_size], vec![out_channels])),
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => Some((vec![in_features, out_features], vec![out_features])),
            LayerSpec::TransposedConv1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => Some((vec![in_channels, out_channels, kernel_size], vec![out_channels])),
            _ => None,
        }
    }

    fn init_weight(&self, rng: &mut ChaCha8Rng) -> Option<Tensor> {
        let (shape, _) = self.param_shapes()?;
        let (fan_in, fan_out) = match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => (in_channels * kernel_size, out_channels * kernel_size),
            LayerSpec::TransposedConv1d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => (out_channels * kernel_size, in_channels * kernel_size),
            LayerSpec::Dense {
                in_features,
                out_features,
                ..
            } => (in_features, out_features),
            _ => unreachable!(),
        };
        let init = match *self {
            LayerSpec::Dense { init, .. } => init,
            _ => Init::Kaiming { negative_slope: 0.01 },
        };
        let bound = match init {
            Init::Kaiming { negative_slope } => {
                (2.0 / (1.0 + negative_slope * negative_slope)).sqrt() * (3.0 / fan_in as f64).sqrt()
            }
            Init::Xavier => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::Head => 1.0 / (fan_in as f64).sqrt(),
        };
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Some(Tensor::new(shape, data).unwrap())
    }
}

/// A learnable tensor. Values are shared copy-on-write with graph leaves.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Arc<Tensor>,
    pub trainable: bool,
}

/// Options for a forward pass through a [`Sequential`].
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Run layers `0..stop`; `None` runs all.
    pub stop: Option<usize>,
}

/// A feed-forward stack of layers with owned parameters.
#[derive(Debug, Clone)]
pub struct Sequential {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Param>,
    /// Per layer, the index of its weight parameter (bias follows it).
    slots: Vec<Option<usize>>,
}

impl Sequential {
    /// Builds and initializes the stack for per-sample `input_shape`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut net = Sequential {
            input_shape,
            layers: Vec::new(),
            params: Vec::new(),
            slots: Vec::new(),
        };
        net.push_layers(layers, seed)?;
        Ok(net)
    }

    fn push_layers(&mut self, layers: Vec<LayerSpec>, seed: u64) -> Result<(), NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = self.output_shape()?;
        for l in layers {
            if let LayerSpec::Dropout { p } = l {
                if !(0.0..1.0).contains(&p) {
                    return Err(NnError::InvalidConfig(format!("dropout p={p}")));
                }
            }
            shape = l.output_shape(&shape)?;
            let slot = l.init_weight(&mut rng).map(|w| {
                let (_, bshape) = l.param_shapes().unwrap();
                self.params.push(Param {
                    value: Arc::new(w),
                    trainable: true,
                });
                self.params.push(Param {
                    value: Arc::new(Tensor::zeros(&bshape)),
                    trainable: true,
                });
                self.params.len() - 2
            });
            self.slots.push(slot);
            self.layers.push(l);
        }
        Ok(())
    }

    /// Rebuilds a stack from stored layers and parameter tensors.
    pub fn from_parts(input_shape: Vec<usize>, layers: Vec<LayerSpec>, params: Vec<Param>) -> Result<Self, NnError> {
        let mut net = Sequential::new(input_shape, layers, 0)?;
        if net.params.len() != params.len()
            || net.params.iter().zip(&params).any(|(a, b)| a.value.shape() != b.value.shape())
        {
            return Err(NnError::ShapeMismatch("parameter shapes do not match the layers".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Parameter indices owned by layers in `range`.
    pub fn layer_params(&self, range: Range<usize>) -> Vec<usize> {
        self.slots[range].iter().flatten().flat_map(|&w| [w, w + 1]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Per-sample shape after every layer (index 0 = input).
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut out = vec![self.input_shape.clone()];
        for l in &self.layers {
            let next = l.output_shape(out.last().unwrap()).expect("validated at construction");
            out.push(next);
        }
        out
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        let mut s = self.input_shape.clone();
        for l in &self.layers {
            s = l.output_shape(&s)?;
        }
        Ok(s)
    }

    pub fn set_trainable(&mut self, layers: Range<usize>, trainable: bool) {
        for i in self.layer_params(layers) {
            self.params[i].trainable = trainable;
        }
    }

    /// Fresh weights for layers in `range`, drawn from `seed`.
    pub fn reinit(&mut self, range: Range<usize>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for li in range {
            if let Some(w) = self.slots[li] {
                self.params[w].value = Arc::new(self.layers[li].init_weight(&mut rng).unwrap());
                let zeros = Tensor::zeros(self.params[w + 1].value.shape());
                self.params[w + 1].value = Arc::new(zeros);
            }
        }
    }

    /// Drops layers from `keep` on and appends `new_layers`.
    pub fn replace_tail(&mut self, keep: usize, new_layers: Vec<LayerSpec>, seed: u64) -> Result<(), NnError> {
        let first_dropped = self.slots[keep..].iter().flatten().next().copied();
        if let Some(w) = first_dropped {
            self.params.truncate(w);
        }
        self.layers.truncate(keep);
        self.slots.truncate(keep);
        self.push_layers(new_layers, seed)
    }

    /// SHA-256 over the parameters of layers in `range`.
    pub fn checksum(&self, range: Range<usize>) -> String {
        let mut h = Sha256::new();
        for i in self.layer_params(range) {
            for v in self.params[i].value.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Graph leaves for every parameter, in parameter order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(Arc::clone(&p.value), p.trainable))
            .collect()
    }

    /// Runs layers `0..stop` and returns the output of every executed layer.
    pub fn forward_trace(&self, g: &mut Graph, x: Var, bound: &[Var], stop: usize) -> Result<Vec<Var>, NnError> {
        let mut outs = Vec::with_capacity(stop);
        let mut h = x;
        for (li, l) in self.layers[..stop].iter().enumerate() {
            let wb = self.slots[li].map(|w| (bound[w], bound[w + 1]));
            h = match l {
                LayerSpec::Conv1d { .. } => {
                    let (w, b) = wb.unwrap();
                    g.conv1d(h, w, b)?
                }
                LayerSpec::TransposedConv1d { stride, padding, .. } => {
                    let (w, b) = wb.unwrap();
                    g.conv_transpose1d(h, w, b, *stride, *padding)?
                }
                LayerSpec::Dense { .. } => {
                    let (w, b) = wb.unwrap();
                    g.dense(h, w, b)?
                }
                LayerSpec::MaxPool1d { pool_size } => g.maxpool1d(h, *pool_size)?,
                LayerSpec::LeakyRelu { negative_slope } => g.leaky_relu(h, *negative_slope),
                LayerSpec::Relu => g.relu(h),
                LayerSpec::Tanh => g.tanh(h),
                LayerSpec::Dropout { p } => g.dropout(h, *p),
                LayerSpec::Softmax => g.softmax(h),
                LayerSpec::Flatten => {
                    let b = g.value(h).rows();
                    let n = g.value(h).numel() / b.max(1);
                    g.reshape(h, vec![b, n])?
                }
                LayerSpec::Reshape { shape } => {
                    let mut s = vec![g.value(h).rows()];
                    s.extend_from_slice(shape);
                    g.reshape(h, s)?
                }
                LayerSpec::Affine { scale, shift } => g.affine(h, *scale, *shift),
                LayerSpec::Crop { len } => g.narrow(h, 0, *len)?,
            };
            outs.push(h);
        }
        Ok(outs)
    }

    /// Output of layers `0..stop` (all layers when `stop` is `None`).
    pub fn forward(&self, g: &mut Graph, x: Var, bound: &[Var], opts: Forward) -> Result<Var, NnError> {
        let stop = opts.stop.unwrap_or(self.layers.len());
        if stop == 0 {
            return Ok(x);
        }
        Ok(*self.forward_trace(g, x, bound, stop)?.last().unwrap())
    }

    /// Eval-mode output of layers `0..stop` for a batched input, processed
    /// in chunks of `batch` rows.
    pub fn infer(&self, x: &Tensor, stop: Option<usize>, batch: usize) -> Result<Tensor, NnError> {
        let n = x.rows();
        let mut out: Option<(Vec<usize>, Vec<f64>)> = None;
        let mut start = 0;
        while start < n {
            let end = (start + batch.max(1)).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let mut g = Graph::new(false, 0);
            let bound: Vec<Var> = self.params.iter().map(|p| g.leaf(Arc::clone(&p.value), false)).collect();
            let xv = g.input(x.gather_rows(&idx));
            let y = self.forward(&mut g, xv, &bound, Forward { stop })?;
            let yt = g.value(y);
            match &mut out {
                None => out = Some((yt.shape().to_vec(), yt.data().to_vec())),
                Some((_, d)) => d.extend_from_slice(yt.data()),
            }
            start = end;
        }
        match out {
            Some((mut shape, data)) => {
                shape[0] = n;
                Tensor::new(shape, data)
            }
            None => {
                let mut shape = vec![0];
                let stop = stop.unwrap_or(self.layers.len());
                shape.extend(self.shape_trace()[stop].iter());
                Ok(Tensor::zeros(&shape))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_param_counts() {
        let net = Sequential::new(
            vec![1, 8],
            vec![
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_size: 3,
                },
                LayerSpec::MaxPool1d { pool_size: 3 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    in_features: 6,
                    out_features: 4,
                    init: Init::Head,
                },
            ],
            1,
        )
        .unwrap();
        assert_eq!(net.output_shape().unwrap(), vec![4]);
        assert_eq!(net.num_params(), 2 * 3 + 2 + 6 * 4 + 4);
        assert_eq!(net.layer_params(0..2), vec![0, 1]);
        let y = net.infer(&Tensor::zeros(&[5, 1, 8]), None, 2).unwrap();
        assert_eq!(y.shape(), &[5, 4]);
    }

    #[test]
    fn replace_tail_and_checksum() {
        let mut net = Sequential::new(
            vec![3],
            vec![
                LayerSpec::Dense {
                    in_features: 3,
                    out_features: 4,
                    init: Init::Xavier,
                },
                LayerSpec::Tanh,
                LayerSpec::Dense {
                    in_features: 4,
                    out_features: 2,
                    init: Init::Head,
                },
            ],
            7,
        )
        .unwrap();
        let c = net.checksum(0..2);
        net.replace_tail(
            2,
            vec![LayerSpec::Dense {
                in_features: 4,
                out_features: 5,
                init: Init::Head,
            }],
            9,
        )
        .unwrap();
        assert_eq!(net.params().len(), 4);
        assert_eq!(net.output_shape().unwrap(), vec![5]);
        assert_eq!(net.checksum(0..2), c);
        net.reinit(0..1, 3);
        assert_ne!(net.checksum(0..2), c);
    }

    #[test]
    fn rejects_bad_stacks() {
        assert!(Sequential::new(
            vec![1, 8],
            vec![LayerSpec::Dense {
                in_features: 8,
                out_features: 2,
                init: Init::Head
            }],
            0
        )
        .is_err());
        assert!(Sequential::new(vec![4], vec![LayerSpec::Dropout { p: 1.0 }], 0).is_err());
    }
}
