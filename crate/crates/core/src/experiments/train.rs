//! Mini-batch training loops with plateau scheduling and early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::logits_stop;
use crate::nn::{class_weights, Adam, Forward, Graph, NnError, Param, PlateauState, Sequential, Tensor, TrainSchedule, Var};
use crate::preprocess::{augment_with_rng, AugmentationSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Classifier training inputs. `targets`/`val_targets` align with
/// `train_idx`/`val_idx`; the trainer never sees other labels.
pub struct ClassifierData<'a> {
    pub x: &'a Tensor,
    pub train_idx: &'a [usize],
    pub targets: &'a [usize],
    pub val_idx: &'a [usize],
    pub val_targets: &'a [usize],
    pub num_classes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub augmentation: Option<AugmentationSpec>,
    pub augment_prob: f64,
    /// Inverse-frequency class weights from the training targets.
    pub class_weighted: bool,
    pub eval_batch: usize,
}

/// Gradients for `bound` after backward, detached from the graph.
pub(crate) fn collect_grads(g: Graph, loss: Var, bound: &[Var]) -> Result<Vec<Option<Tensor>>, NnError> {
    let mut grads = g.backward(loss)?;
    let out = bound.iter().map(|&v| grads.take(v)).collect();
    drop(g);
    Ok(out)
}

pub(crate) fn apply(adam: &mut Adam, params: &mut [Param], grads: &[Option<Tensor>]) -> Result<(), NnError> {
    let refs: Vec<Option<&Tensor>> = grads.iter().map(Option::as_ref).collect();
    adam.step(params, &refs)
}

pub(crate) fn augment_batch(batch: &mut Tensor, spec: &AugmentationSpec, prob: f64, rng: &mut ChaCha8Rng) {
    let rows = batch.rows();
    let w = batch.numel() / rows.max(1);
    for r in 0..rows {
        if rng.gen::<f64>() < prob {
            let row = batch.data()[r * w..(r + 1) * w].to_vec();
            let aug = augment_with_rng(&row, spec, rng);
            batch.data_mut()[r * w..(r + 1) * w].copy_from_slice(&aug);
        }
    }
}

/// Eval-mode weighted cross-entropy of `net` over `idx`.
pub fn eval_loss(net: &Sequential, x: &Tensor, idx: &[usize], targets: &[usize], weights: &[f64], batch: usize) -> Result<f64, NnError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let stop = logits_stop(net);
    let (mut num, mut den) = (0.0, 0.0);
    for (chunk, tchunk) in idx.chunks(batch.max(1)).zip(targets.chunks(batch.max(1))) {
        let logits = net.infer(&x.gather_rows(chunk), Some(stop), chunk.len())?;
        let c = logits.shape()[1];
        let lse = crate::nn::kernels::logsumexp_rows(&logits);
        for (b, &t) in tchunk.iter().enumerate() {
            num += weights[t] * (lse[b] - logits.data()[b * c + t]);
            den += weights[t];
        }
    }
    Ok(num / den)
}

/// Softmax outputs of `net` for rows `idx`.
pub fn predict_proba(net: &Sequential, x: &Tensor, idx: &[usize], batch: usize) -> Result<Vec<Vec<f64>>, NnError> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch.max(1)) {
        let p = net.infer(&x.gather_rows(chunk), None, chunk.len())?;
        out.extend((0..chunk.len()).map(|r| p.row(r).to_vec()));
    }
    Ok(out)
}

/// Trains a softmax classifier with weighted cross-entropy and Adam. The
/// schedule watches validation loss (training loss when there is no
/// validation set); the best-epoch weights are restored at the end.
pub fn train_classifier(net: &mut Sequential, data: &ClassifierData, sched: &TrainSchedule, opts: &TrainOptions) -> Result<TrainLog, NnError> {
    sched.validate()?;
    if data.train_idx.is_empty() || data.train_idx.len() != data.targets.len() {
        return Err(NnError::InvalidConfig("training set is empty or misaligned".into()));
    }
    let weights = if opts.class_weighted {
        class_weights(data.targets, data.num_classes)
    } else {
        vec![1.0; data.num_classes]
    };
    let stop = logits_stop(net);
    let mut adam = Adam::new(net.params(), sched.lr0);
    let mut state = PlateauState::new(sched);
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut order: Vec<usize> = (0..data.train_idx.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Vec<Param> = net.params().to_vec();
    let eval_batch = if opts.eval_batch == 0 { 64 } else { opts.eval_batch };
    for epoch in 1..=sched.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(sched.batch_size) {
            let rows: Vec<usize> = chunk.iter().map(|&o| data.train_idx[o]).collect();
            let targets: Vec<usize> = chunk.iter().map(|&o| data.targets[o]).collect();
            let mut xb = data.x.gather_rows(&rows);
            if let Some(spec) = &opts.augmentation {
                augment_batch(&mut xb, spec, opts.augment_prob, &mut rng);
            }
            let mut g = Graph::new(true, rng.gen());
            let bound = net.bind(&mut g);
            let xv = g.input(xb);
            let logits = net.forward(&mut g, xv, &bound, Forward { stop: Some(stop) })?;
            let loss = g.weighted_cross_entropy(logits, &targets, &weights)?;
            total += g.value(loss).data()[0] * chunk.len() as f64;
            seen += chunk.len();
            let grads = collect_grads(g, loss, &bound)?;
            apply(&mut adam, net.params_mut(), &grads)?;
        }
        let train_loss = total / seen as f64;
        let val_loss = if data.val_idx.is_empty() {
            train_loss
        } else {
            eval_loss(net, data.x, data.val_idx, data.val_targets, &weights, eval_batch)?
        };
        let lr = adam.lr;
        let d = state.observe(val_loss, sched);
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if d.improved {
            best = net.params().to_vec();
            log.best_epoch = epoch;
        }
        adam.lr = d.lr;
        if d.stop {
            log.stopped_early = true;
            break;
        }
    }
    for (p, b) in net.params_mut().iter_mut().zip(best) {
        p.value = b.value;
    }
    Ok(log)
}
