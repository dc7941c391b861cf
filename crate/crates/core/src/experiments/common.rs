//! Pieces shared by the protocol runners: partitions, fitting, scoring.

use super::metrics::{confidence_gap, topk_accuracy};
use super::report::{DatasetSummary, ExperimentReport, FoldMetrics};
use super::train::{predict_proba, train_classifier, ClassifierData, TrainLog, TrainOptions};
use super::{derive_seed, holdout_split, stratified_kfold, to_flat_kv, ExperimentConfig, ExperimentError};
use crate::models::CnnConfig;
use crate::nn::{Sequential, Tensor, TrainSchedule};
use crate::preprocess::SpectralDataset;

/// All rows as a `[N, 1, L]` tensor.
pub fn dataset_tensor(ds: &SpectralDataset) -> Tensor {
    Tensor::from_f32_rows(&ds.rows, ds.target_len, 1)
}

/// Fixed held-out test rows and the pool used for cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub test: Vec<usize>,
    pub pool: Vec<usize>,
}

/// One stratified fold becomes the test set when `holdout_test` is on;
/// otherwise every row is in the pool.
pub fn partition(labels: &[usize], cfg: &ExperimentConfig) -> Partition {
    if !cfg.holdout_test {
        return Partition {
            test: Vec::new(),
            pool: (0..labels.len()).collect(),
        };
    }
    let plan = stratified_kfold(labels, cfg.folds, derive_seed(cfg.seed, "test-fold", 0));
    let (pool, test) = plan.split(0);
    Partition { test, pool }
}

/// Stratified `k`-fold `(train, eval)` splits of `pool`, as dataset indices.
pub fn cv_splits(labels: &[usize], pool: &[usize], k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let sub: Vec<usize> = pool.iter().map(|&i| labels[i]).collect();
    let plan = stratified_kfold(&sub, k, seed);
    (0..k)
        .map(|f| {
            let (tr, ev) = plan.split(f);
            (tr.iter().map(|&p| pool[p]).collect(), ev.iter().map(|&p| pool[p]).collect())
        })
        .collect()
}

pub(crate) fn cnn_for(template: &CnnConfig, ds: &SpectralDataset) -> CnnConfig {
    CnnConfig {
        input_len: ds.target_len,
        num_classes: ds.num_classes(),
        ..template.clone()
    }
}

pub(crate) fn job_schedule(cfg: &ExperimentConfig, tag: &str, index: u64) -> TrainSchedule {
    TrainSchedule {
        seed: derive_seed(cfg.seed, tag, index),
        ..cfg.schedule.clone()
    }
}

pub(crate) fn train_options(cfg: &ExperimentConfig) -> TrainOptions {
    TrainOptions {
        augmentation: cfg.augment.then(|| cfg.augmentation.clone()),
        augment_prob: cfg.augment_prob,
        class_weighted: true,
        eval_batch: cfg.eval_batch,
    }
}

/// Trains `net` on rows `idx` with the given targets, holding out a
/// stratified `val_fraction` of them for the schedule.
pub(crate) fn fit(
    net: &mut Sequential,
    x: &Tensor,
    idx: &[usize],
    targets: &[usize],
    num_classes: usize,
    cfg: &ExperimentConfig,
    sched: &TrainSchedule,
    opts: &TrainOptions,
) -> Result<TrainLog, ExperimentError> {
    let positions: Vec<usize> = (0..idx.len()).collect();
    let (val_pos, kept_pos) = holdout_split(targets, &positions, cfg.val_fraction, derive_seed(sched.seed, "val", 0));
    let pick = |ps: &[usize], v: &[usize]| ps.iter().map(|&p| v[p]).collect::<Vec<usize>>();
    let (train_idx, train_t) = (pick(&kept_pos, idx), pick(&kept_pos, targets));
    let (val_idx, val_t) = (pick(&val_pos, idx), pick(&val_pos, targets));
    let data = ClassifierData {
        x,
        train_idx: &train_idx,
        targets: &train_t,
        val_idx: &val_idx,
        val_targets: &val_t,
        num_classes,
    };
    Ok(train_classifier(net, &data, sched, opts)?)
}

/// `(top1, top3, confidence gap)` of probability rows.
pub(crate) fn score(probs: &[Vec<f64>], labels: &[usize]) -> (f64, f64, f64) {
    (topk_accuracy(probs, labels, 1), topk_accuracy(probs, labels, 3), confidence_gap(probs))
}

pub(crate) fn evaluate(
    net: &Sequential,
    x: &Tensor,
    idx: &[usize],
    labels: &[usize],
    batch: usize,
) -> Result<(f64, f64, f64), ExperimentError> {
    let probs = predict_proba(net, x, idx, batch)?;
    let truth: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    Ok(score(&probs, &truth))
}

pub(crate) fn fold_metrics(fold: usize, split: &str, m: (f64, f64, f64), train_size: usize, eval_size: usize) -> FoldMetrics {
    FoldMetrics {
        fold,
        split: split.to_string(),
        top1: m.0,
        top3: Some(m.1),
        confidence_gap: Some(m.2),
        train_size,
        eval_size,
        loss_curve: Vec::new(),
    }
}

/// Report skeleton carrying the dataset summary and the flattened config.
pub(crate) fn new_report<E: serde::Serialize>(kind: &str, ds: &SpectralDataset, cfg: &ExperimentConfig, extra_cfg: &E) -> ExperimentReport {
    let mut config = to_flat_kv(cfg);
    for (k, v) in to_flat_kv(extra_cfg) {
        config.insert(format!("protocol.{k}"), v);
    }
    ExperimentReport::new(kind, cfg.seed, DatasetSummary::of(ds), config)
}

pub(crate) fn check_dataset(ds: &SpectralDataset, cfg: &ExperimentConfig) -> Result<(), ExperimentError> {
    cfg.validate()?;
    if ds.num_classes() < 2 {
        return Err(ExperimentError::InsufficientData("need at least two classes".into()));
    }
    if ds.len() < 2 * cfg.folds {
        return Err(ExperimentError::InsufficientData(format!("{} rows for {} folds", ds.len(), cfg.folds)));
    }
    Ok(())
}
