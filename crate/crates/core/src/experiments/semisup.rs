//! Semi-supervised protocols: SGAN, contrastive pretraining, autoencoder
//! features. Training labels are read only through a [`LabelView`] that
//! hides the unlabeled partition.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::common::{check_dataset, cnn_for, dataset_tensor, evaluate, fit, fold_metrics, job_schedule, new_report, partition, score, train_options, Partition};
use super::labels::LabelView;
use super::report::{ExperimentReport, FoldMetrics, ReportCell};
use super::train::{apply, augment_batch, collect_grads, EpochLog, TrainLog, TrainOptions};
use super::{derive_seed, holdout_split, stratified_fraction, ExperimentConfig, ExperimentError};
use crate::models::{build_autoencoder, build_cnn, build_contrastive, build_feature_classifier, build_linear_head, logits_stop, AutoencoderConfig, ContrastiveConfig, SganConfig};
use crate::nn::{class_weights, kernels, Adam, Forward, Graph, NnError, Param, PlateauState, Sequential, Tensor, TrainSchedule, Var};
use crate::preprocess::{augment_with_rng, AugmentationSpec, SpectralDataset};

/// Labeled / unlabeled partition of the training pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSupSplit {
    pub labeled_fraction: f64,
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub seed: u64,
}

/// Stratified labeled subset holding `fraction` of each class in `pool`.
pub fn semi_sup_split(labels: &[usize], pool: &[usize], fraction: f64, seed: u64) -> SemiSupSplit {
    let (labeled, unlabeled) = stratified_fraction(labels, pool, fraction, seed);
    SemiSupSplit {
        labeled_fraction: fraction,
        labeled,
        unlabeled,
        seed,
    }
}

fn check_fraction(p: f64) -> Result<(), ExperimentError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(ExperimentError::InvalidConfig(format!("labeled fraction {p} not in (0, 1]")));
    }
    Ok(())
}

struct Setup {
    part: Partition,
    split: SemiSupSplit,
    x: Tensor,
}

fn setup(ds: &SpectralDataset, pool: Option<Vec<usize>>, p: f64, cfg: &ExperimentConfig) -> Result<Setup, ExperimentError> {
    check_dataset(ds, cfg)?;
    check_fraction(p)?;
    if !cfg.holdout_test {
        return Err(ExperimentError::InvalidConfig("semi-supervised protocols need holdout_test".into()));
    }
    let mut part = partition(&ds.labels, cfg);
    if let Some(pool) = pool {
        part.pool = pool;
    }
    let split = semi_sup_split(&ds.labels, &part.pool, p, derive_seed(cfg.seed, "labeled", 0));
    Ok(Setup {
        part,
        split,
        x: dataset_tensor(ds),
    })
}

fn guarded_targets(view: &LabelView, idx: &[usize]) -> Result<Vec<usize>, ExperimentError> {
    view.labels_of(idx)
        .ok_or_else(|| ExperimentError::Invariant("label requested for an unlabeled row".into()))
}

/// CNN trained on the labeled subset only, scored on the test rows.
fn supervised_baseline(ds: &SpectralDataset, s: &Setup, view: &LabelView, cfg: &ExperimentConfig) -> Result<FoldMetrics, ExperimentError> {
    let targets = guarded_targets(view, &s.split.labeled)?;
    let mut net = build_cnn(&cnn_for(&cfg.cnn, ds), derive_seed(cfg.seed, "init-baseline", 0))?;
    let sched = job_schedule(cfg, "baseline", 0);
    let log = fit(&mut net, &s.x, &s.split.labeled, &targets, ds.num_classes(), cfg, &sched, &train_options(cfg))?;
    let m = evaluate(&net, &s.x, &s.part.test, &ds.labels, cfg.eval_batch)?;
    let mut fm = fold_metrics(0, "supervised", m, s.split.labeled.len(), s.part.test.len());
    fm.loss_curve = log.epochs;
    Ok(fm)
}

fn finish_semisup(report: &mut ExperimentReport, kind: &str, s: &Setup, view: &LabelView, base: FoldMetrics, ours: FoldMetrics) {
    let p = format!("p={}", s.split.labeled_fraction);
    report.cells.push(ReportCell::new(&p, "supervised", &[("top1", base.top1), ("top3", base.top3.unwrap_or(0.0))]));
    report.cells.push(ReportCell::new(&p, kind, &[("top1", ours.top1), ("top3", ours.top3.unwrap_or(0.0))]));
    report.folds.push(base);
    report.folds.push(ours);
    report.extras.insert("labeled_rows".into(), serde_json::json!(s.split.labeled.len()));
    report.extras.insert("unlabeled_rows".into(), serde_json::json!(s.split.unlabeled.len()));
    report.extras.insert("label_reads".into(), serde_json::json!(view.reads()));
    report.extras.insert("unlabeled_label_reads".into(), serde_json::json!(view.hidden_reads()));
    report.finalize();
}

fn normal_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.sample(StandardNormal);
    }
    t
}

/// Leaves for `net` that take no gradient.
fn bind_frozen(net: &Sequential, g: &mut Graph) -> Vec<Var> {
    net.params().iter().map(|p| g.leaf(Arc::clone(&p.value), false)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SganProtocol {
    pub labeled_fraction: f64,
    pub latent_dim: usize,
    pub generator_channels: usize,
    pub generator_stages: usize,
}

impl Default for SganProtocol {
    fn default() -> Self {
        SganProtocol {
            labeled_fraction: 0.1,
            latent_dim: 128,
            generator_channels: 64,
            generator_stages: 4,
        }
    }
}

/// `(min, max)` over every stored intensity.
fn data_range(ds: &SpectralDataset) -> (f64, f64) {
    ds.rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)))
}

/// Class probabilities over the `n` real classes from the discriminator.
fn sgan_probs(d: &Sequential, x: &Tensor, idx: &[usize], n: usize, batch: usize) -> Result<Vec<Vec<f64>>, NnError> {
    let stop = logits_stop(d);
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(batch.max(1)) {
        let logits = d.infer(&x.gather_rows(chunk), Some(stop), chunk.len())?;
        let w = logits.shape()[1];
        let real: Vec<f64> = logits.data().chunks(w).flat_map(|r| r[..n].to_vec()).collect();
        let p = kernels::softmax_rows(&Tensor::new(vec![chunk.len(), n], real)?);
        out.extend((0..chunk.len()).map(|r| p.row(r).to_vec()));
    }
    Ok(out)
}

/// Mean cross-entropy over the real-class logits.
fn sgan_val_loss(d: &Sequential, x: &Tensor, idx: &[usize], targets: &[usize], n: usize, batch: usize) -> Result<f64, NnError> {
    let probs = sgan_probs(d, x, idx, n, batch)?;
    Ok(probs.iter().zip(targets).map(|(p, &t)| -p[t].max(1e-300).ln()).sum::<f64>() / idx.len().max(1) as f64)
}

/// Mean over rows of `logsumexp(all) − logsumexp(real)`, i.e. `−log(1 − p_fake)`.
fn not_fake_loss(g: &mut Graph, logits: Var, n: usize) -> Result<Var, NnError> {
    let all = g.logsumexp_rows(logits)?;
    let real = g.narrow(logits, 0, n)?;
    let real = g.logsumexp_rows(real)?;
    let d = g.sub(all, real)?;
    Ok(g.mean(d))
}

/// Mean over rows of `logsumexp(all) − logit_fake`, i.e. `−log p_fake`.
fn fake_loss(g: &mut Graph, logits: Var, n: usize) -> Result<Var, NnError> {
    let b = g.value(logits).shape()[0];
    let all = g.logsumexp_rows(logits)?;
    let f = g.narrow(logits, n, 1)?;
    let f = g.reshape(f, vec![b])?;
    let d = g.sub(all, f)?;
    Ok(g.mean(d))
}

/// Semi-supervised GAN. Each batch makes one discriminator step (labeled
/// cross-entropy over the real classes, plus real-vs-fake terms through the
/// extra class) and one non-saturating generator step. The generator output
/// is checked for finiteness and range after every epoch.
pub fn run_sgan(ds: &SpectralDataset, proto: &SganProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    let s = setup(ds, None, proto.labeled_fraction, cfg)?;
    let view = LabelView::new(&ds.labels, s.split.unlabeled.iter().copied());
    let n = ds.num_classes();
    let range = data_range(ds);
    let scfg = SganConfig {
        latent_dim: proto.latent_dim,
        discriminator: cnn_for(&cfg.cnn, ds),
        generator_channels: proto.generator_channels,
        generator_stages: proto.generator_stages,
        output_range: range,
    };
    let mut models = crate::models::build_sgan(&scfg, derive_seed(cfg.seed, "init-sgan", 0))?;
    let sched = job_schedule(cfg, "sgan", 0);
    sched.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);

    let targets_all = guarded_targets(&view, &s.split.labeled)?;
    let positions: Vec<usize> = (0..targets_all.len()).collect();
    let (val_pos, train_pos) = holdout_split(&targets_all, &positions, cfg.val_fraction, derive_seed(sched.seed, "val", 0));
    let lab_idx: Vec<usize> = train_pos.iter().map(|&p| s.split.labeled[p]).collect();
    let lab_t: Vec<usize> = train_pos.iter().map(|&p| targets_all[p]).collect();
    let val_idx: Vec<usize> = val_pos.iter().map(|&p| s.split.labeled[p]).collect();
    let val_t: Vec<usize> = val_pos.iter().map(|&p| targets_all[p]).collect();
    let (val_idx, val_t) = if val_idx.is_empty() { (lab_idx.clone(), lab_t.clone()) } else { (val_idx, val_t) };
    let mut unsup: Vec<usize> = s.split.unlabeled.iter().chain(&lab_idx).copied().collect();
    unsup.sort_unstable();
    let weights = class_weights(&lab_t, n);
    let stop = logits_stop(&models.discriminator);
    let b = sched.batch_size;

    let mut adam_d = Adam::new(models.discriminator.params(), sched.lr0);
    let mut adam_g = Adam::new(models.generator.params(), sched.lr0);
    let mut state = PlateauState::new(&sched);
    let mut log = TrainLog::default();
    let mut best: Vec<Param> = models.discriminator.params().to_vec();
    let probe_z = normal_tensor(&[8, proto.latent_dim], &mut ChaCha8Rng::seed_from_u64(derive_seed(sched.seed, "probe-z", 0)));
    let mut lab_order: Vec<usize> = (0..lab_idx.len()).collect();
    let mut lab_cursor = lab_order.len();
    for epoch in 1..=sched.max_epochs {
        unsup.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for chunk in unsup.chunks(b) {
            let bs = chunk.len();
            let mut lb = Vec::with_capacity(bs);
            while lb.len() < bs {
                if lab_cursor == lab_order.len() {
                    lab_order.shuffle(&mut rng);
                    lab_cursor = 0;
                }
                lb.push(lab_order[lab_cursor]);
                lab_cursor += 1;
            }
            let xl = s.x.gather_rows(&lb.iter().map(|&p| lab_idx[p]).collect::<Vec<_>>());
            let tl: Vec<usize> = lb.iter().map(|&p| lab_t[p]).collect();
            let xu = s.x.gather_rows(chunk);
            let z = normal_tensor(&[bs, proto.latent_dim], &mut rng);
            let fake = models.generator.infer(&z, None, bs)?;

            let mut g = Graph::new(true, rng.gen());
            let bound = models.discriminator.bind(&mut g);
            let fwd = Forward { stop: Some(stop) };
            let xv = g.input(xl);
            let ll = models.discriminator.forward(&mut g, xv, &bound, fwd)?;
            let lr = g.narrow(ll, 0, n)?;
            let sup = g.weighted_cross_entropy(lr, &tl, &weights)?;
            let uv = g.input(xu);
            let lu = models.discriminator.forward(&mut g, uv, &bound, fwd)?;
            let real = not_fake_loss(&mut g, lu, n)?;
            let fv = g.input(fake);
            let lf = models.discriminator.forward(&mut g, fv, &bound, fwd)?;
            let fk = fake_loss(&mut g, lf, n)?;
            let l1 = g.add(sup, real)?;
            let loss = g.add(l1, fk)?;
            total += g.value(loss).data()[0];
            steps += 1;
            let grads = collect_grads(g, loss, &bound)?;
            apply(&mut adam_d, models.discriminator.params_mut(), &grads)?;

            let mut g = Graph::new(true, rng.gen());
            let gb = models.generator.bind(&mut g);
            let db = bind_frozen(&models.discriminator, &mut g);
            let zv = g.input(z);
            let out = models.generator.forward(&mut g, zv, &gb, Forward { stop: None })?;
            let lo = models.discriminator.forward(&mut g, out, &db, fwd)?;
            let gl = not_fake_loss(&mut g, lo, n)?;
            let grads = collect_grads(g, gl, &gb)?;
            apply(&mut adam_g, models.generator.params_mut(), &grads)?;
        }
        let sample = models.generator.infer(&probe_z, None, 8)?;
        let tol = 1e-9 * (1.0 + range.1.abs().max(range.0.abs()));
        if let Some(v) = sample.data().iter().find(|v| !v.is_finite() || **v < range.0 - tol || **v > range.1 + tol) {
            return Err(ExperimentError::Invariant(format!("generator produced {v} outside [{}, {}] at epoch {epoch}", range.0, range.1)));
        }
        let train_loss = total / steps.max(1) as f64;
        let val_loss = sgan_val_loss(&models.discriminator, &s.x, &val_idx, &val_t, n, cfg.eval_batch)?;
        let d = state.observe(val_loss, &sched);
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr: adam_d.lr,
        });
        if d.improved {
            best = models.discriminator.params().to_vec();
            log.best_epoch = epoch;
        }
        adam_d.lr = d.lr;
        adam_g.lr = d.lr;
        if d.stop {
            log.stopped_early = true;
            break;
        }
    }
    for (p, b) in models.discriminator.params_mut().iter_mut().zip(best) {
        p.value = b.value;
    }
    let probs = sgan_probs(&models.discriminator, &s.x, &s.part.test, n, cfg.eval_batch)?;
    let truth: Vec<usize> = s.part.test.iter().map(|&i| ds.labels[i]).collect();
    let mut ours = fold_metrics(0, "sgan", score(&probs, &truth), s.split.labeled.len(), s.part.test.len());
    ours.loss_curve = log.epochs;
    let base = supervised_baseline(ds, &s, &view, cfg)?;

    let mut report = new_report("sgan", ds, cfg, proto);
    let synthetic = models.generator.infer(&probe_z, None, 8)?;
    report.extras.insert(
        "sample_pair".into(),
        serde_json::json!({
            "real_row": ds.provenance[s.split.labeled[0]],
            "real": ds.row(s.split.labeled[0]),
            "synthetic": synthetic.row(0).iter().map(|&v| v as f32).collect::<Vec<f32>>(),
        }),
    );
    report.extras.insert("generator_range".into(), serde_json::json!([range.0, range.1]));
    finish_semisup(&mut report, "sgan", &s, &view, base, ours);
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveProtocol {
    pub labeled_fraction: f64,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    pub temperature: f64,
    /// Test rows used for the augmentation-agreement check.
    pub triple_samples: usize,
}

impl Default for ContrastiveProtocol {
    fn default() -> Self {
        ContrastiveProtocol {
            labeled_fraction: 0.1,
            projection_hidden: 512,
            projection_dim: 128,
            temperature: 0.5,
            triple_samples: 200,
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-300)
}

/// Fraction of sampled rows whose embedding is closer (cosine) to the
/// embedding of their own augmentation than to that of another random row.
pub fn augmentation_agreement(
    net: &Sequential,
    stop: usize,
    x: &Tensor,
    rows: &[usize],
    spec: &AugmentationSpec,
    samples: usize,
    seed: u64,
) -> Result<f64, ExperimentError> {
    if rows.len() < 2 {
        return Err(ExperimentError::InsufficientData("agreement check needs two rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = rows.to_vec();
    anchors.shuffle(&mut rng);
    anchors.truncate(samples.max(1));
    let others: Vec<usize> = anchors
        .iter()
        .map(|&a| loop {
            let o = rows[rng.gen_range(0..rows.len())];
            if o != a {
                break o;
            }
        })
        .collect();
    let base = x.gather_rows(&anchors);
    let mut aug = base.clone();
    augment_batch(&mut aug, spec, 1.0, &mut rng);
    let ha = net.infer(&base, Some(stop), 64)?;
    let hp = net.infer(&aug, Some(stop), 64)?;
    let ho = net.infer(&x.gather_rows(&others), Some(stop), 64)?;
    let wins = (0..anchors.len())
        .filter(|&i| cosine(ha.row(i), hp.row(i)) > cosine(ha.row(i), ho.row(i)))
        .count();
    Ok(wins as f64 / anchors.len() as f64)
}

/// Trains `net` (input `[.., 1, L]`) with NT-Xent on two augmented views of
/// each batch row. Returns the per-epoch mean loss.
pub fn pretrain_contrastive(net: &mut Sequential, x: &Tensor, rows: &[usize], spec: &AugmentationSpec, tau: f64, sched: &TrainSchedule) -> Result<TrainLog, ExperimentError> {
    sched.validate()?;
    spec.validate().map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    if rows.len() < 2 {
        return Err(ExperimentError::InsufficientData("contrastive pretraining needs two rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut adam = Adam::new(net.params(), sched.lr0);
    let mut state = PlateauState::new(sched);
    let mut order = rows.to_vec();
    let mut log = TrainLog::default();
    let w = x.numel() / x.rows().max(1);
    for epoch in 1..=sched.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(sched.batch_size.max(2)) {
            if chunk.len() < 2 {
                continue;
            }
            let base = x.gather_rows(chunk);
            let mut data = Vec::with_capacity(2 * base.numel());
            for _ in 0..2 {
                for r in 0..chunk.len() {
                    data.extend(augment_with_rng(&base.data()[r * w..(r + 1) * w], spec, &mut rng));
                }
            }
            let mut shape = base.shape().to_vec();
            shape[0] = 2 * chunk.len();
            let mut g = Graph::new(true, rng.gen());
            let bound = net.bind(&mut g);
            let xv = g.input(Tensor::new(shape, data)?);
            let z = net.forward(&mut g, xv, &bound, Forward { stop: None })?;
            let loss = g.nt_xent(z, tau)?;
            total += g.value(loss).data()[0];
            steps += 1;
            let grads = collect_grads(g, loss, &bound)?;
            apply(&mut adam, net.params_mut(), &grads)?;
        }
        let train_loss = total / steps.max(1) as f64;
        let d = state.observe(train_loss, sched);
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss: train_loss,
            lr: adam.lr,
        });
        if d.improved {
            log.best_epoch = epoch;
        }
        adam.lr = d.lr;
        if d.stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok(log)
}

/// Fits a classifier `head` on frozen features of the labeled rows and
/// scores it on the test rows.
fn fit_on_features(
    head: &mut Sequential,
    feats: &Tensor,
    ds: &SpectralDataset,
    s: &Setup,
    view: &LabelView,
    cfg: &ExperimentConfig,
    split: &str,
) -> Result<FoldMetrics, ExperimentError> {
    let targets = guarded_targets(view, &s.split.labeled)?;
    let sched = job_schedule(cfg, split, 0);
    let opts = TrainOptions {
        augmentation: None,
        ..train_options(cfg)
    };
    let log = fit(head, feats, &s.split.labeled, &targets, ds.num_classes(), cfg, &sched, &opts)?;
    let m = evaluate(head, feats, &s.part.test, &ds.labels, cfg.eval_batch)?;
    let mut fm = fold_metrics(0, split, m, s.split.labeled.len(), s.part.test.len());
    fm.loss_curve = log.epochs;
    Ok(fm)
}

/// Contrastive pretraining of encoder and projection on the unlabeled
/// training pool, then a softmax head on the frozen encoder features using
/// the labeled subset.
pub fn run_contrastive(ds: &SpectralDataset, proto: &ContrastiveProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    let s = setup(ds, None, proto.labeled_fraction, cfg)?;
    let view = LabelView::new(&ds.labels, s.split.unlabeled.iter().copied());
    let ccfg = ContrastiveConfig {
        encoder: cnn_for(&cfg.cnn, ds),
        projection_hidden: proto.projection_hidden,
        projection_dim: proto.projection_dim,
        temperature: proto.temperature,
    };
    let (mut net, enc_stop) = build_contrastive(&ccfg, derive_seed(cfg.seed, "init-contrastive", 0))?;
    let sched = job_schedule(cfg, "contrastive", 0);
    let pre = pretrain_contrastive(&mut net, &s.x, &s.part.pool, &cfg.augmentation, proto.temperature, &sched)?;
    let rows = if s.part.test.len() >= 2 { &s.part.test } else { &s.part.pool };
    let agreement = augmentation_agreement(&net, enc_stop, &s.x, rows, &cfg.augmentation, proto.triple_samples, derive_seed(cfg.seed, "triples", 0))?;
    let feats = net.infer(&s.x, Some(enc_stop), cfg.eval_batch)?;
    let mut head = build_linear_head(feats.shape()[1], ds.num_classes(), derive_seed(cfg.seed, "init-head", 0))?;
    let ours = fit_on_features(&mut head, &feats, ds, &s, &view, cfg, "contrastive")?;
    let base = supervised_baseline(ds, &s, &view, cfg)?;
    let mut report = new_report("contrastive", ds, cfg, proto);
    report.extras.insert("pretrain_loss".into(), serde_json::json!(pre.epochs.iter().map(|e| e.train_loss).collect::<Vec<_>>()));
    report.extras.insert("augmentation_agreement".into(), serde_json::json!(agreement));
    report.extras.insert("feature_dim".into(), serde_json::json!(feats.shape()[1]));
    finish_semisup(&mut report, "contrastive", &s, &view, base, ours);
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderProtocol {
    pub labeled_fraction: f64,
    /// Share of the training pool reserved for autoencoder pretraining and
    /// excluded from classifier training.
    pub pretrain_fraction: f64,
    pub hidden: usize,
    pub latent_dim: usize,
    pub sparsity: f64,
}

impl Default for AutoencoderProtocol {
    fn default() -> Self {
        let a = AutoencoderConfig::default();
        AutoencoderProtocol {
            labeled_fraction: 0.1,
            pretrain_fraction: 0.3,
            hidden: a.hidden,
            latent_dim: a.latent_dim,
            sparsity: a.sparsity,
        }
    }
}

/// Trains `net` to reconstruct rows with an L1 penalty on the latent code
/// (output of layer `latent_stop − 1`). Each epoch's `val_loss` is the
/// eval-mode reconstruction MSE over `rows`.
pub fn pretrain_autoencoder(net: &mut Sequential, latent_stop: usize, sparsity: f64, x: &Tensor, rows: &[usize], sched: &TrainSchedule) -> Result<TrainLog, ExperimentError> {
    sched.validate()?;
    if rows.is_empty() {
        return Err(ExperimentError::InsufficientData("no autoencoder pretraining rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut adam = Adam::new(net.params(), sched.lr0);
    let mut state = PlateauState::new(sched);
    let mut order = rows.to_vec();
    let mut log = TrainLog::default();
    let depth = net.layers().len();
    for epoch in 1..=sched.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(sched.batch_size) {
            let mut g = Graph::new(true, rng.gen());
            let bound = net.bind(&mut g);
            let xv = g.input(x.gather_rows(chunk));
            let trace = net.forward_trace(&mut g, xv, &bound, depth)?;
            let recon = g.mse(trace[depth - 1], xv, true)?;
            let l1 = g.abs_sum(trace[latent_stop - 1]);
            let l1 = g.affine(l1, sparsity / chunk.len() as f64, 0.0);
            let loss = g.add(recon, l1)?;
            total += g.value(loss).data()[0];
            steps += 1;
            let grads = collect_grads(g, loss, &bound)?;
            apply(&mut adam, net.params_mut(), &grads)?;
        }
        let xs = x.gather_rows(rows);
        let out = net.infer(&xs, None, 64)?;
        let mse = out.data().iter().zip(xs.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / xs.numel() as f64;
        let d = state.observe(mse, sched);
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / steps.max(1) as f64,
            val_loss: mse,
            lr: adam.lr,
        });
        if d.improved {
            log.best_epoch = epoch;
        }
        adam.lr = d.lr;
        if d.stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok(log)
}

/// Sparse autoencoder pretrained on a reserved share of the pool; the
/// classifier sees only frozen latent codes of the labeled rows drawn from
/// the remainder.
pub fn run_autoencoder_features(ds: &SpectralDataset, proto: &AutoencoderProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    if !(0.0..1.0).contains(&proto.pretrain_fraction) || proto.pretrain_fraction == 0.0 {
        return Err(ExperimentError::InvalidConfig(format!("pretrain_fraction {}", proto.pretrain_fraction)));
    }
    let base_part = partition(&ds.labels, cfg);
    let (pretrain, rest) = holdout_split(&ds.labels, &base_part.pool, proto.pretrain_fraction, derive_seed(cfg.seed, "ae-pretrain", 0));
    let s = setup(ds, Some(rest), proto.labeled_fraction, cfg)?;
    let view = LabelView::new(&ds.labels, s.split.unlabeled.iter().chain(&pretrain).copied());
    let acfg = AutoencoderConfig {
        input_len: ds.target_len,
        hidden: proto.hidden,
        latent_dim: proto.latent_dim,
        sparsity: proto.sparsity,
        negative_slope: cfg.cnn.negative_slope,
    };
    let (mut ae, latent_stop) = build_autoencoder(&acfg, derive_seed(cfg.seed, "init-ae", 0))?;
    let sched = job_schedule(cfg, "autoencoder", 0);
    let pre = pretrain_autoencoder(&mut ae, latent_stop, proto.sparsity, &s.x, &pretrain, &sched)?;
    let feats = ae.infer(&s.x, Some(latent_stop), cfg.eval_batch)?;
    let mut clf = build_feature_classifier(feats.shape()[1], cfg.cnn.dense_width, cfg.cnn.dropout_p, ds.num_classes(), derive_seed(cfg.seed, "init-clf", 0))?;
    let ours = fit_on_features(&mut clf, &feats, ds, &s, &view, cfg, "autoencoder")?;
    let base = supervised_baseline(ds, &s, &view, cfg)?;
    let mut report = new_report("autoencoder", ds, cfg, proto);
    report.extras.insert("recon_mse".into(), serde_json::json!(pre.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>()));
    report.extras.insert("latent_dim".into(), serde_json::json!(feats.shape()[1]));
    report.extras.insert("pretrain_rows".into(), serde_json::json!(pretrain.len()));
    finish_semisup(&mut report, "autoencoder", &s, &view, base, ours);
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}
