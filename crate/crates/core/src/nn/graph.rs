//! Tape-based reverse-mode differentiation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::*;
use super::{NnError, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv1d { x: Var, w: Var, b: Var },
    ConvT1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Dense { x: Var, w: Var, b: Var },
    LeakyRelu { x: Var, slope: f64 },
    Relu { x: Var },
    Tanh { x: Var },
    Dropout { x: Var, mask: Vec<f64> },
    Softmax { x: Var },
    LogSoftmax { x: Var },
    Reshape { x: Var },
    Narrow { x: Var, start: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    Sum { x: Var },
    Mean { x: Var },
    AbsSum { x: Var },
    LogSumExpRows { x: Var },
    WeightedCe { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Tensor },
    Mse { a: Var, b: Var, mean: bool },
    NtXent { z: Var, unit: Tensor, norms: Vec<f64>, probs: Vec<f64>, tau: f64 },
}

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Records a computation for one forward/backward pass.
pub struct Graph {
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

impl Graph {
    /// `training` enables dropout; `seed` drives dropout masks.
    pub fn new(training: bool, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(Arc::new(t), false)
    }

    /// Same value as `v` with gradient flow cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.shared_value(v);
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Arc::new(value),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<(), NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn rows_cols(&self, x: Var) -> Result<(usize, usize), NnError> {
        match *self.value(x).shape() {
            [r, c] => Ok((r, c)),
            ref s => Err(NnError::ShapeMismatch(format!("expected a 2-D tensor, got {s:?}"))),
        }
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = conv1d_forward(self.value(x), self.value(w), Some(self.value(b)))?;
        Ok(self.push(y, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var, NnError> {
        let y = conv_transpose1d_forward(self.value(x), self.value(w), Some(self.value(b)), stride, pad)?;
        Ok(self.push(y, Op::ConvT1d { x, w, b, stride, pad }, &[x, w, b]))
    }

    pub fn maxpool1d(&mut self, x: Var, m: usize) -> Result<Var, NnError> {
        let (y, argmax) = maxpool1d_forward(self.value(x), m)?;
        Ok(self.push(y, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let y = dense_forward(self.value(x), self.value(w), Some(self.value(b)))?;
        Ok(self.push(y, Op::Dense { x, w, b }, &[x, w, b]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(y, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(0.0));
        self.push(y, Op::Relu { x }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(f64::tanh);
        self.push(y, Op::Tanh { x }, &[x])
    }

    /// Inverted dropout; identity when not training or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut y = self.value(x).clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(y, Op::Dropout { x, mask }, &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let y = softmax_rows(self.value(x));
        self.push(y, Op::Softmax { x }, &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let lse = logsumexp_rows(self.value(x));
        let c = *self.value(x).shape().last().unwrap();
        let mut y = self.value(x).clone();
        for (row, l) in y.data_mut().chunks_mut(c).zip(&lse) {
            for v in row {
                *v -= l;
            }
        }
        self.push(y, Op::LogSoftmax { x }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape { x }, &[x]))
    }

    /// Keeps positions `start..start + len` of the last axis.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let xs = self.value(x).shape().to_vec();
        let last = *xs.last().unwrap();
        if start + len > last || len == 0 {
            return Err(NnError::ShapeMismatch(format!("narrow {start}+{len} of axis {last}")));
        }
        let mut shape = xs.clone();
        *shape.last_mut().unwrap() = len;
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(last)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let y = Tensor::new(shape, data)?;
        Ok(self.push(y, Op::Narrow { x, start }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b)?;
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b)?;
        let mut y = self.value(a).clone();
        for (v, w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v -= w;
        }
        Ok(self.push(y, Op::Sub { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b)?;
        let mut y = self.value(a).clone();
        for (v, w) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *v *= w;
        }
        Ok(self.push(y, Op::Mul { a, b }, &[a, b]))
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let y = self.value(x).map(|v| scale * v + shift);
        self.push(y, Op::Affine { x, scale }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let y = Tensor::scalar(self.value(x).sum());
        self.push(y, Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(y, Op::Mean { x }, &[x])
    }

    /// `Σ|x|`.
    pub fn abs_sum(&mut self, x: Var) -> Var {
        let y = Tensor::scalar(self.value(x).data().iter().map(|v| v.abs()).sum());
        self.push(y, Op::AbsSum { x }, &[x])
    }

    /// `[B,C] → [B]`, `log Σ_c exp x[b,c]`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var, NnError> {
        let (r, _) = self.rows_cols(x)?;
        let y = Tensor::new(vec![r], logsumexp_rows(self.value(x)))?;
        Ok(self.push(y, Op::LogSumExpRows { x }, &[x]))
    }

    /// `Σ_b w[t_b]·(−log softmax(logits_b)[t_b]) / Σ_b w[t_b]`.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[usize], class_weights: &[f64]) -> Result<Var, NnError> {
        let (r, c) = self.rows_cols(logits)?;
        if targets.len() != r || class_weights.len() != c || targets.iter().any(|&t| t >= c) {
            return Err(NnError::ShapeMismatch(format!(
                "{} targets / {} weights for logits [{r},{c}]",
                targets.len(),
                class_weights.len()
            )));
        }
        if class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(NnError::InvalidConfig("class weights must be positive".into()));
        }
        let probs = softmax_rows(self.value(logits));
        let lse = logsumexp_rows(self.value(logits));
        let weights: Vec<f64> = targets.iter().map(|&t| class_weights[t]).collect();
        let total: f64 = weights.iter().sum();
        let loss: f64 = (0..r)
            .map(|b| weights[b] * (lse[b] - self.value(logits).data()[b * c + targets[b]]))
            .sum::<f64>()
            / total;
        let op = Op::WeightedCe {
            logits,
            targets: targets.to_vec(),
            weights,
            probs,
        };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    /// Squared error summed over all elements, or averaged when `mean`.
    pub fn mse(&mut self, a: Var, b: Var, mean: bool) -> Result<Var, NnError> {
        self.same_shape(a, b)?;
        let mut s: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        if mean {
            s /= self.value(a).numel() as f64;
        }
        Ok(self.push(Tensor::scalar(s), Op::Mse { a, b, mean }, &[a, b]))
    }

    /// Normalized-temperature cross-entropy over `z[2B,d]` with positive
    /// pairs `(i, i+B)`; rows are ℓ2-normalized internally.
    pub fn nt_xent(&mut self, z: Var, tau: f64) -> Result<Var, NnError> {
        let (n, d) = self.rows_cols(z)?;
        if n % 2 != 0 {
            return Err(NnError::ShapeMismatch(format!("nt_xent needs an even row count, got {n}")));
        }
        if n < 4 {
            return Err(NnError::InsufficientBatch);
        }
        let half = n / 2;
        let zt = self.value(z);
        let mut unit = zt.clone();
        let mut norms = vec![0.0; n];
        for (i, row) in unit.data_mut().chunks_mut(d).enumerate() {
            let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            norms[i] = nrm;
            for v in row {
                *v /= nrm;
            }
        }
        let mut sim = vec![0.0; n * n];
        gemm(n, d, n, unit.data(), (d, 1), unit.data(), (1, d), 0.0, &mut sim, (n, 1));
        let mut probs = vec![0.0; n * n];
        let mut loss = 0.0;
        for i in 0..n {
            let pos = (i + half) % n;
            let row = &sim[i * n..(i + 1) * n];
            let mx = (0..n).filter(|&k| k != i).map(|k| row[k] / tau).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for k in (0..n).filter(|&k| k != i) {
                let e = (row[k] / tau - mx).exp();
                probs[i * n + k] = e;
                s += e;
            }
            for k in 0..n {
                probs[i * n + k] /= s;
            }
            loss += -(row[pos] / tau) + mx + s.ln();
        }
        loss /= n as f64;
        let op = Op::NtXent {
            z,
            unit,
            norms,
            probs,
            tau,
        };
        Ok(self.push(Tensor::scalar(loss), op, &[z]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.value(loss).numel() != 1 {
            return Err(NnError::NonScalarLoss);
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(NnError::DetachedTensor);
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::Conv1d { x, w, b } => {
                let need_w = self.rg(w) || self.rg(b);
                let (dx, dw, db) = conv1d_backward(self.value(x), self.value(w), g, self.rg(x), need_w);
                if let Some(dx) = dx {
                    self.acc(grads, x, dx);
                }
                if need_w {
                    self.acc(grads, w, dw);
                    self.acc(grads, b, db);
                }
            }
            &Op::ConvT1d { x, w, b, stride, pad } => {
                let need_w = self.rg(w) || self.rg(b);
                let (dx, dw, db) =
                    conv_transpose1d_backward(self.value(x), self.value(w), g, stride, pad, self.rg(x), need_w);
                if let Some(dx) = dx {
                    self.acc(grads, x, dx);
                }
                if need_w {
                    self.acc(grads, w, dw);
                    self.acc(grads, b, db);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                for (&a, &gv) in argmax.iter().zip(g.data()) {
                    dx.data_mut()[a] += gv;
                }
                self.acc(grads, *x, dx);
            }
            &Op::Dense { x, w, b } => {
                let need_w = self.rg(w) || self.rg(b);
                let (dx, dw, db) = dense_backward(self.value(x), self.value(w), g, self.rg(x), need_w);
                if let Some(dx) = dx {
                    self.acc(grads, x, dx);
                }
                if need_w {
                    self.acc(grads, w, dw);
                    self.acc(grads, b, db);
                }
            }
            &Op::LeakyRelu { x, slope } => {
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(self.value(x).data()) {
                    if v <= 0.0 {
                        *d *= slope;
                    }
                }
                self.acc(grads, x, dx);
            }
            &Op::Relu { x } => {
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(self.value(x).data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.acc(grads, x, dx);
            }
            &Op::Tanh { x } => {
                let mut dx = g.clone();
                for (d, &y) in dx.data_mut().iter_mut().zip(out.data()) {
                    *d *= 1.0 - y * y;
                }
                self.acc(grads, x, dx);
            }
            Op::Dropout { x, mask } => {
                let mut dx = g.clone();
                for (d, m) in dx.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
                self.acc(grads, *x, dx);
            }
            &Op::Softmax { x } => {
                let c = *out.shape().last().unwrap();
                let mut dx = g.clone();
                for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let dot: f64 = drow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (d, y) in drow.iter_mut().zip(yrow) {
                        *d = y * (*d - dot);
                    }
                }
                self.acc(grads, x, dx);
            }
            &Op::LogSoftmax { x } => {
                let c = *out.shape().last().unwrap();
                let mut dx = g.clone();
                for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                    let s: f64 = drow.iter().sum();
                    for (d, y) in drow.iter_mut().zip(yrow) {
                        *d -= y.exp() * s;
                    }
                }
                self.acc(grads, x, dx);
            }
            &Op::Reshape { x } => {
                let dx = g.clone().reshape(self.value(x).shape().to_vec()).unwrap();
                self.acc(grads, x, dx);
            }
            &Op::Narrow { x, start } => {
                let mut dx = Tensor::zeros(self.value(x).shape());
                let last = *dx.shape().last().unwrap();
                let len = *g.shape().last().unwrap();
                for (drow, grow) in dx.data_mut().chunks_mut(last).zip(g.data().chunks(len)) {
                    drow[start..start + len].copy_from_slice(grow);
                }
                self.acc(grads, x, dx);
            }
            &Op::Add { a, b } => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.clone());
            }
            &Op::Sub { a, b } => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.map(|v| -v));
            }
            &Op::Mul { a, b } => {
                let mut da = g.clone();
                for (d, v) in da.data_mut().iter_mut().zip(self.value(b).data()) {
                    *d *= v;
                }
                let mut db = g.clone();
                for (d, v) in db.data_mut().iter_mut().zip(self.value(a).data()) {
                    *d *= v;
                }
                self.acc(grads, a, da);
                self.acc(grads, b, db);
            }
            &Op::Affine { x, scale } => self.acc(grads, x, g.map(|v| v * scale)),
            &Op::Sum { x } => {
                let dx = Tensor::filled(self.value(x).shape(), g.data()[0]);
                self.acc(grads, x, dx);
            }
            &Op::Mean { x } => {
                let n = self.value(x).numel() as f64;
                let dx = Tensor::filled(self.value(x).shape(), g.data()[0] / n);
                self.acc(grads, x, dx);
            }
            &Op::AbsSum { x } => {
                let s = g.data()[0];
                let dx = self.value(x).map(|v| s * v.signum() * (v != 0.0) as u8 as f64);
                self.acc(grads, x, dx);
            }
            &Op::LogSumExpRows { x } => {
                let mut dx = softmax_rows(self.value(x));
                let c = *dx.shape().last().unwrap();
                for (row, &gv) in dx.data_mut().chunks_mut(c).zip(g.data()) {
                    for v in row {
                        *v *= gv;
                    }
                }
                self.acc(grads, x, dx);
            }
            Op::WeightedCe {
                logits,
                targets,
                weights,
                probs,
            } => {
                let total: f64 = weights.iter().sum();
                let c = probs.shape()[1];
                let mut dx = probs.clone();
                for (b, row) in dx.data_mut().chunks_mut(c).enumerate() {
                    row[targets[b]] -= 1.0;
                    let s = g.data()[0] * weights[b] / total;
                    for v in row {
                        *v *= s;
                    }
                }
                self.acc(grads, *logits, dx);
            }
            &Op::Mse { a, b, mean } => {
                let n = self.value(a).numel() as f64;
                let s = g.data()[0] * 2.0 / if mean { n } else { 1.0 };
                let mut da = self.value(a).clone();
                for (d, v) in da.data_mut().iter_mut().zip(self.value(b).data()) {
                    *d = s * (*d - v);
                }
                if self.rg(b) {
                    self.acc(grads, b, da.map(|v| -v));
                }
                self.acc(grads, a, da);
            }
            Op::NtXent {
                z,
                unit,
                norms,
                probs,
                tau,
            } => {
                let (n, d) = (unit.shape()[0], unit.shape()[1]);
                let half = n / 2;
                let scale = g.data()[0] / n as f64;
                // dL/ds_ik for the scaled similarity matrix s = UUᵀ/τ.
                let mut gs = probs.clone();
                for i in 0..n {
                    gs[i * n + (i + half) % n] -= 1.0;
                }
                let mut sym = vec![0.0; n * n];
                for i in 0..n {
                    for k in 0..n {
                        sym[i * n + k] = (gs[i * n + k] + gs[k * n + i]) * scale / tau;
                    }
                }
                let mut du = vec![0.0; n * d];
                gemm(n, n, d, &sym, (n, 1), unit.data(), (d, 1), 0.0, &mut du, (d, 1));
                let mut dz = Tensor::zeros(&[n, d]);
                for i in 0..n {
                    let u = &unit.data()[i * d..(i + 1) * d];
                    let gu = &du[i * d..(i + 1) * d];
                    let dot: f64 = u.iter().zip(gu).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dz.data_mut()[i * d + j] = (gu[j] - u[j] * dot) / norms[i];
                    }
                }
                self.acc(grads, *z, dz);
            }
        }
    }
}
