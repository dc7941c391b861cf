//! Layer freezing and head-only transfer to held-out classes.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{check_dataset, cnn_for, dataset_tensor, evaluate, fit, fold_metrics, job_schedule, new_report, partition, train_options};
use super::report::{ExperimentReport, FoldMetrics, ReportCell};
use super::{derive_seed, stratified_sample, ExperimentConfig, ExperimentError};
use crate::models::{build_cnn, conv_block_layers};
use crate::nn::{Init, LayerSpec, Sequential, Tensor, TrainSchedule};
use crate::par;
use crate::preprocess::SpectralDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeProtocol {
    /// Sizes of the stratified pretraining subsets.
    pub subset_sizes: Vec<usize>,
    /// Leading conv blocks copied and frozen after pretraining.
    pub frozen_blocks: usize,
}

impl Default for FreezeProtocol {
    fn default() -> Self {
        FreezeProtocol {
            subset_sizes: vec![80, 200, 848],
            frozen_blocks: 2,
        }
    }
}

/// For each subset size: train a CNN on a stratified subset of the pool,
/// freeze its first conv blocks, reinitialize the rest and retrain on the
/// whole pool. An end-to-end CNN on the pool is the reference row.
pub fn run_layer_freezing(ds: &SpectralDataset, proto: &FreezeProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    check_dataset(ds, cfg)?;
    if proto.frozen_blocks == 0 || proto.frozen_blocks >= cfg.cnn.num_conv_blocks + 1 {
        return Err(ExperimentError::InvalidConfig(format!("frozen_blocks={}", proto.frozen_blocks)));
    }
    let start = Instant::now();
    let x = dataset_tensor(ds);
    let labels = &ds.labels;
    let part = partition(labels, cfg);
    let pool_t: Vec<usize> = part.pool.iter().map(|&i| labels[i]).collect();
    let cnn = cnn_for(&cfg.cnn, ds);
    let opts = train_options(cfg);
    // Job 0 is the end-to-end reference; job j > 0 pretrains on subset j − 1.
    let results = par::map_indexed(proto.subset_sizes.len() + 1, cfg.jobs, |j| -> Result<(FoldMetrics, Option<bool>), ExperimentError> {
        let mut net = build_cnn(&cnn, derive_seed(cfg.seed, "init-freeze", j as u64))?;
        if j == 0 {
            let log = fit(&mut net, &x, &part.pool, &pool_t, ds.num_classes(), cfg, &job_schedule(cfg, "freeze-full", 0), &opts)?;
            let m = evaluate(&net, &x, &part.test, labels, cfg.eval_batch)?;
            let mut fm = fold_metrics(0, "end_to_end", m, part.pool.len(), part.test.len());
            fm.loss_curve = log.epochs;
            return Ok((fm, None));
        }
        let size = proto.subset_sizes[j - 1];
        let subset = stratified_sample(labels, &part.pool, size, derive_seed(cfg.seed, "freeze-subset", j as u64));
        let sub_t: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
        fit(&mut net, &x, &subset, &sub_t, ds.num_classes(), cfg, &job_schedule(cfg, "freeze-pre", j as u64), &opts)?;
        let keep = conv_block_layers(&net, proto.frozen_blocks);
        let before = net.checksum(0..keep);
        net.set_trainable(0..keep, false);
        let depth = net.layers().len();
        net.reinit(keep..depth, derive_seed(cfg.seed, "freeze-reinit", j as u64));
        let log = fit(&mut net, &x, &part.pool, &pool_t, ds.num_classes(), cfg, &job_schedule(cfg, "freeze-post", j as u64), &opts)?;
        let unchanged = net.checksum(0..keep) == before;
        if !unchanged {
            return Err(ExperimentError::Invariant("frozen layers changed during retraining".into()));
        }
        let m = evaluate(&net, &x, &part.test, labels, cfg.eval_batch)?;
        let mut fm = fold_metrics(0, &format!("pretrain={}", subset.len()), m, subset.len(), part.test.len());
        fm.loss_curve = log.epochs;
        Ok((fm, Some(unchanged)))
    });
    let mut report = new_report("layer_freezing", ds, cfg, proto);
    let mut all_frozen = true;
    for r in results {
        let (fm, frozen) = r?;
        all_frozen &= frozen.unwrap_or(true);
        report.cells.push(ReportCell::new(&fm.split, "test", &[("top1", fm.top1), ("top3", fm.top3.unwrap_or(0.0))]));
        report.folds.push(fm);
    }
    report.extras.insert("frozen_checksums_unchanged".into(), serde_json::json!(all_frozen));
    report.finalize();
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferProtocol {
    /// Numbers `c` of classes held out of pretraining.
    pub held_out: Vec<usize>,
    pub finetune_lr: f64,
    pub finetune_patience: usize,
    pub finetune_max_epochs: usize,
}

impl Default for TransferProtocol {
    fn default() -> Self {
        TransferProtocol {
            held_out: vec![5, 10, 15, 20],
            finetune_lr: 1e-5,
            finetune_patience: 5,
            finetune_max_epochs: 50,
        }
    }
}

/// Index of the final dense layer (the softmax head).
pub fn head_start(net: &Sequential) -> Option<usize> {
    net.layers().iter().rposition(|l| matches!(l, LayerSpec::Dense { .. }))
}

/// Replaces the head with a fresh `num_classes`-way one and freezes every
/// layer before it. Returns the head's layer index.
pub fn attach_head(net: &mut Sequential, num_classes: usize, seed: u64) -> Result<usize, ExperimentError> {
    let h = head_start(net).ok_or_else(|| ExperimentError::InvalidConfig("network has no dense head".into()))?;
    let in_features = match &net.layers()[h] {
        LayerSpec::Dense { in_features, .. } => *in_features,
        _ => unreachable!(),
    };
    net.replace_tail(
        h,
        vec![
            LayerSpec::Dense {
                in_features,
                out_features: num_classes,
                init: Init::Head,
            },
            LayerSpec::Softmax,
        ],
        seed,
    )?;
    net.set_trainable(0..h, false);
    Ok(h)
}

/// Best-of-`reps` seconds per prediction for two heads of widths `c_a` and
/// `c_b` on the same backbone, with the runs interleaved so drift affects
/// both equally. Returns `(t_a, t_b)`.
pub fn head_inference_cost(backbone: &Sequential, c_a: usize, c_b: usize, x: &Tensor, reps: usize) -> Result<(f64, f64), ExperimentError> {
    let mut a = backbone.clone();
    attach_head(&mut a, c_a, 1)?;
    let mut b = backbone.clone();
    attach_head(&mut b, c_b, 2)?;
    let n = x.rows().max(1) as f64;
    let (mut ta, mut tb) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..reps.max(1) {
        for (net, t) in [(&a, &mut ta), (&b, &mut tb)] {
            let s = Instant::now();
            std::hint::black_box(net.infer(x, None, x.rows())?);
            *t = t.min(s.elapsed().as_secs_f64() / n);
        }
    }
    Ok((ta, tb))
}

/// For each `c`: pretrain a CNN on the other classes, swap in a `c`-way head,
/// and fine-tune only that head on the held-out classes.
pub fn run_transfer(ds: &SpectralDataset, proto: &TransferProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    check_dataset(ds, cfg)?;
    let total = ds.num_classes();
    if let Some(&c) = proto.held_out.iter().find(|&&c| c < 2 || c + 2 > total) {
        return Err(ExperimentError::InvalidConfig(format!("c={c} with {total} classes (need 2 ≤ c ≤ classes − 2)")));
    }
    let start = Instant::now();
    let x = dataset_tensor(ds);
    let labels = &ds.labels;
    let part = partition(labels, cfg);
    let opts = train_options(cfg);
    type Out = (Vec<FoldMetrics>, serde_json::Value);
    let results = par::map_indexed(proto.held_out.len(), cfg.jobs, |j| -> Result<Out, ExperimentError> {
        let c = proto.held_out[j];
        let mut classes: Vec<usize> = (0..total).collect();
        classes.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "transfer-classes", c as u64)));
        let held = &classes[..c];
        let mut remap = vec![usize::MAX; total];
        let (mut np, mut nh) = (0, 0);
        for k in 0..total {
            if held.contains(&k) {
                remap[k] = nh;
                nh += 1;
            } else {
                remap[k] = np;
                np += 1;
            }
        }
        let relabeled: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
        let select = |rows: &[usize], want_held: bool| -> Vec<usize> { rows.iter().copied().filter(|&i| held.contains(&labels[i]) == want_held).collect() };
        let (pre_train, pre_test) = (select(&part.pool, false), select(&part.test, false));
        let (ft_train, ft_test) = (select(&part.pool, true), select(&part.test, true));
        let targets = |rows: &[usize]| rows.iter().map(|&i| relabeled[i]).collect::<Vec<usize>>();

        let mut cnn = cnn_for(&cfg.cnn, ds);
        cnn.num_classes = total - c;
        let mut net = build_cnn(&cnn, derive_seed(cfg.seed, "init-transfer", c as u64))?;
        let pre_log = fit(&mut net, &x, &pre_train, &targets(&pre_train), total - c, cfg, &job_schedule(cfg, "transfer-pre", c as u64), &opts)?;
        let pre_m = evaluate(&net, &x, &pre_test, &relabeled, cfg.eval_batch)?;

        let h = attach_head(&mut net, c, derive_seed(cfg.seed, "transfer-head", c as u64))?;
        let before = net.checksum(0..h);
        let sched = TrainSchedule {
            lr0: proto.finetune_lr,
            early_stop_patience: proto.finetune_patience,
            max_epochs: proto.finetune_max_epochs,
            ..job_schedule(cfg, "transfer-ft", c as u64)
        };
        let ft_log = fit(&mut net, &x, &ft_train, &targets(&ft_train), c, cfg, &sched, &opts)?;
        if net.checksum(0..h) != before {
            return Err(ExperimentError::Invariant("backbone changed during head fine-tuning".into()));
        }
        let ft_m = evaluate(&net, &x, &ft_test, &relabeled, cfg.eval_batch)?;
        let mut pre = fold_metrics(j, &format!("c={c}/pretrain"), pre_m, pre_train.len(), pre_test.len());
        pre.loss_curve = pre_log.epochs;
        let mut ft = fold_metrics(j, &format!("c={c}/finetune"), ft_m, ft_train.len(), ft_test.len());
        ft.loss_curve = ft_log.epochs;
        let mut held_names: Vec<&str> = held.iter().map(|&k| ds.class_names[k].as_str()).collect();
        held_names.sort_unstable();
        Ok((vec![pre, ft], serde_json::json!({ "held_out_classes": held_names, "backbone_checksum": before })))
    });
    let mut report = new_report("transfer", ds, cfg, proto);
    for (j, r) in results.into_iter().enumerate() {
        let (fms, info) = r?;
        let row = format!("c={}", proto.held_out[j]);
        for (fm, col) in fms.iter().zip(["pretrain", "finetune"]) {
            report.cells.push(ReportCell::new(&row, col, &[("top1", fm.top1), ("top3", fm.top3.unwrap_or(0.0))]));
        }
        report.folds.extend(fms);
        report.extras.insert(row, info);
    }
    report.notes.push("the backbone checksum is verified unchanged after head fine-tuning".into());
    report.finalize();
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}
