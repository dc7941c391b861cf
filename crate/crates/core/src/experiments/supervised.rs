//! Fully supervised protocols: neural models, CNN+KNN, peak-feature baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::common::{check_dataset, cnn_for, cv_splits, dataset_tensor, evaluate, fit, fold_metrics, job_schedule, new_report, partition, train_options};
use super::metrics::topk_accuracy;
use super::report::{ExperimentReport, FoldMetrics, ReportCell};
use super::train::TrainLog;
use super::{derive_seed, ExperimentConfig, ExperimentError};
use crate::classical::{class_distance_stats, grid_search, peak_features, squared_euclidean, ParamCell, PeakDetectorConfig};
use crate::models::{build_cnn, build_mlp, extract_features, MlpConfig, MlpPreset};
use crate::nn::{Sequential, Tensor};
use crate::par;
use crate::preprocess::SpectralDataset;

/// Peak histogram bin width in grid steps (1392 / 12 = 116 bins).
pub const PEAK_BIN_WIDTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    MlpS,
    MlpM,
    MlpL,
    CnnKnn,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cnn" => ModelKind::Cnn,
            "mlp_s" => ModelKind::MlpS,
            "mlp_m" => ModelKind::MlpM,
            "mlp_l" => ModelKind::MlpL,
            "cnn_knn" => ModelKind::CnnKnn,
            other => return Err(format!("unknown model kind `{other}`")),
        })
    }
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::MlpS => "mlp_s",
            ModelKind::MlpM => "mlp_m",
            ModelKind::MlpL => "mlp_l",
            ModelKind::CnnKnn => "cnn_knn",
        }
    }
}

/// Config block recorded in supervised reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisedProtocol {
    pub model: ModelKind,
}

impl Default for SupervisedProtocol {
    fn default() -> Self {
        SupervisedProtocol { model: ModelKind::Cnn }
    }
}

/// Untrained network for `kind`, sized to the dataset.
pub fn build_model(kind: ModelKind, ds: &SpectralDataset, cfg: &ExperimentConfig, seed: u64) -> Result<Sequential, ExperimentError> {
    let preset = match kind {
        ModelKind::Cnn | ModelKind::CnnKnn => return Ok(build_cnn(&cnn_for(&cfg.cnn, ds), seed)?),
        ModelKind::MlpS => MlpPreset::Small,
        ModelKind::MlpM => MlpPreset::Mid,
        ModelKind::MlpL => MlpPreset::Large,
    };
    let mlp = MlpConfig {
        input_len: ds.target_len,
        dense_width: cfg.cnn.dense_width,
        dropout_p: cfg.cnn.dropout_p,
        negative_slope: cfg.cnn.negative_slope,
        ..MlpConfig::preset(preset, ds.num_classes())
    };
    Ok(build_mlp(&mlp, seed)?)
}

/// Negated distance from each query to the closest training sample of each
/// class: the argmax is the 1-NN prediction and the ordering ranks classes.
fn nearest_class_scores(train: &Tensor, train_labels: &[usize], queries: &Tensor, num_classes: usize) -> Vec<Vec<f64>> {
    (0..queries.rows())
        .map(|q| {
            let mut best = vec![f64::INFINITY; num_classes];
            for (r, &l) in train_labels.iter().enumerate() {
                let d = squared_euclidean(train.row(r), queries.row(q));
                if d < best[l] {
                    best[l] = d;
                }
            }
            best.into_iter().map(|d| -d).collect()
        })
        .collect()
}

/// Trains `kind` on each cross-validation fold of the pool and scores the
/// held-out fold (`cv`) and the fixed test rows (`test`). Folds run in
/// parallel with `cfg.jobs` workers.
pub fn run_supervised(ds: &SpectralDataset, kind: ModelKind, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    check_dataset(ds, cfg)?;
    let start = Instant::now();
    let x = dataset_tensor(ds);
    let labels = &ds.labels;
    let part = partition(labels, cfg);
    let splits = cv_splits(labels, &part.pool, cfg.folds, derive_seed(cfg.seed, "cv", 0));
    let opts = train_options(cfg);
    let results = par::map_indexed(splits.len(), cfg.jobs, |f| -> Result<Vec<FoldMetrics>, ExperimentError> {
        let (train, eval) = &splits[f];
        let sched = job_schedule(cfg, kind.label(), f as u64);
        let mut net = build_model(kind, ds, cfg, derive_seed(cfg.seed, "init", f as u64))?;
        let targets: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let log = fit(&mut net, &x, train, &targets, ds.num_classes(), cfg, &sched, &opts)?;
        let mut out = Vec::new();
        let evals = [("cv", eval), ("test", &part.test)];
        if kind == ModelKind::CnnKnn {
            let feats = extract_features(&net, &x.gather_rows(train))?;
            for (split, rows) in evals.into_iter().filter(|(_, r)| !r.is_empty()) {
                let q = extract_features(&net, &x.gather_rows(rows))?;
                let scores = nearest_class_scores(&feats, &targets, &q, ds.num_classes());
                let truth: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
                out.push(FoldMetrics {
                    fold: f,
                    split: split.to_string(),
                    top1: topk_accuracy(&scores, &truth, 1),
                    top3: Some(topk_accuracy(&scores, &truth, 3)),
                    confidence_gap: None,
                    train_size: train.len(),
                    eval_size: rows.len(),
                    loss_curve: Vec::new(),
                });
            }
        } else {
            for (split, rows) in evals.into_iter().filter(|(_, r)| !r.is_empty()) {
                let m = evaluate(&net, &x, rows, labels, cfg.eval_batch)?;
                out.push(fold_metrics(f, split, m, train.len(), rows.len()));
            }
        }
        out[0].loss_curve = log.epochs;
        Ok(out)
    });
    let mut report = new_report("supervised", ds, cfg, &SupervisedProtocol { model: kind });
    for r in results {
        report.folds.extend(r?);
    }
    report.folds.sort_by(|a, b| (a.split != "cv", a.fold).cmp(&(b.split != "cv", b.fold)));
    report.extras.insert("model_kind".into(), serde_json::json!(kind.label()));
    report.extras.insert("test_rows".into(), serde_json::json!(part.test.len()));
    report.finalize();
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

/// Fits `kind` on the whole training pool (every row outside the held-out
/// test fold). For `CnnKnn` this is the feature-extracting CNN.
pub fn fit_final(ds: &SpectralDataset, kind: ModelKind, cfg: &ExperimentConfig) -> Result<(Sequential, TrainLog), ExperimentError> {
    check_dataset(ds, cfg)?;
    let x = dataset_tensor(ds);
    let part = partition(&ds.labels, cfg);
    let targets: Vec<usize> = part.pool.iter().map(|&i| ds.labels[i]).collect();
    let mut net = build_model(kind, ds, cfg, derive_seed(cfg.seed, "init-final", 0))?;
    let log = fit(&mut net, &x, &part.pool, &targets, ds.num_classes(), cfg, &job_schedule(cfg, "final", 0), &train_options(cfg))?;
    Ok((net, log))
}

/// Settings of the peak-feature baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalProtocol {
    pub detector: PeakDetectorConfig,
    pub bin_width: usize,
    pub grid: Vec<ParamCell>,
}

impl Default for ClassicalProtocol {
    fn default() -> Self {
        ClassicalProtocol {
            detector: PeakDetectorConfig::default(),
            bin_width: PEAK_BIN_WIDTH,
            grid: vec![ParamCell::Knn { k: 1 }, ParamCell::Svm { c: 10.0, gamma: 0.01 }],
        }
    }
}

pub fn cell_label(cell: &ParamCell) -> String {
    match cell {
        ParamCell::Knn { k } => format!("knn_k{k}"),
        ParamCell::Svm { c, gamma } => format!("svm_c{c}_g{gamma}"),
    }
}

/// Row-wise peak histograms as `f64` vectors.
pub fn dataset_peak_features(ds: &SpectralDataset, detector: &PeakDetectorConfig, bin_width: usize, jobs: usize) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let rows: Vec<Vec<f64>> = (0..ds.len()).map(|i| ds.row_f64(i)).collect();
    Ok(peak_features(&rows, detector, bin_width, jobs)?
        .iter()
        .map(|f| f.to_f64())
        .collect())
}

/// KNN / SVM on peak histograms: each grid cell is cross-validated on the
/// pool (split label = cell name) and, refit on the whole pool, scored on
/// the test rows (`<cell>/test`).
pub fn run_classical(ds: &SpectralDataset, proto: &ClassicalProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    check_dataset(ds, cfg)?;
    let start = Instant::now();
    let feats = dataset_peak_features(ds, &proto.detector, proto.bin_width, cfg.jobs)?;
    let labels = &ds.labels;
    let part = partition(labels, cfg);
    let pool_feats: Vec<Vec<f64>> = part.pool.iter().map(|&i| feats[i].clone()).collect();
    let pool_labels: Vec<usize> = part.pool.iter().map(|&i| labels[i]).collect();
    let plan = super::stratified_kfold(&pool_labels, cfg.folds, derive_seed(cfg.seed, "cv", 0));
    let search = grid_search(&proto.grid, &pool_feats, &pool_labels, &plan, cfg.jobs)?;
    let mut report = new_report("classical", ds, cfg, proto);
    for cs in &search.cells {
        let name = cell_label(&cs.cell);
        for (f, &acc) in cs.fold_accuracy.iter().enumerate() {
            let eval = plan.fold_indices(f).len();
            report.folds.push(FoldMetrics {
                fold: f,
                split: name.clone(),
                top1: acc,
                top3: None,
                confidence_gap: None,
                train_size: pool_labels.len() - eval,
                eval_size: eval,
                loss_curve: Vec::new(),
            });
        }
        report.cells.push(ReportCell::new(&name, "cv", &[("top1", cs.mean_accuracy)]));
    }
    if !part.test.is_empty() {
        let tests = par::map_indexed(proto.grid.len(), cfg.jobs, |c| proto.grid[c].evaluate(&feats, labels, &part.pool, &part.test));
        for (cell, acc) in proto.grid.iter().zip(tests) {
            let acc = acc?;
            let name = cell_label(cell);
            report.folds.push(FoldMetrics {
                fold: 0,
                split: format!("{name}/test"),
                top1: acc,
                top3: None,
                confidence_gap: None,
                train_size: part.pool.len(),
                eval_size: part.test.len(),
                loss_curve: Vec::new(),
            });
            report.cells.push(ReportCell::new(&name, "test", &[("top1", acc)]));
        }
    }
    report.extras.insert("best_cell".into(), serde_json::to_value(search.best).unwrap());
    report.finalize();
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}

/// Mean intra- and inter-class Euclidean distances of the peak histograms.
pub fn run_distances(ds: &SpectralDataset, proto: &ClassicalProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let feats = dataset_peak_features(ds, &proto.detector, proto.bin_width, cfg.jobs)?;
    let stats = class_distance_stats(&feats, &ds.labels)?;
    let mut report = new_report("distances", ds, cfg, proto);
    report.cells.push(ReportCell::new("peak_features", "distance", &[("intra", stats.intra), ("inter", stats.inter)]));
    report.finalize();
    Ok(report)
}
