//! Robustness of trained CNNs to rigid translations of the test spectra.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::common::{check_dataset, cnn_for, dataset_tensor, fit, fold_metrics, job_schedule, new_report, partition, score, train_options};
use super::metrics::ranked_classes;
use super::report::{ExperimentReport, ReportCell};
use super::train::predict_proba;
use super::{derive_seed, ExperimentConfig, ExperimentError};
use crate::models::build_cnn;
use crate::nn::{Sequential, Tensor};
use crate::par;
use crate::preprocess::{shift_spectrum, SpectralDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProtocol {
    /// `(pool size m, pooling depth n)` per variant.
    pub variants: Vec<(usize, usize)>,
    /// Translations in cm⁻¹; each is evaluated at `+Δ` and `−Δ`.
    pub shifts: Vec<f64>,
    /// Leading test rows whose top-3 predictions are listed per cell.
    pub probes: usize,
}

impl Default for ShiftProtocol {
    fn default() -> Self {
        ShiftProtocol {
            variants: vec![(2, 3), (64, 3), (2, 1), (2, 10)],
            shifts: vec![0.0, 15.0, 30.0],
            probes: 3,
        }
    }
}

pub fn variant_label(m: usize, n: usize) -> String {
    format!("m={m},n={n}")
}

pub fn shift_label(shift: f64) -> String {
    format!("shift={shift}")
}

/// Rows `idx` of `x` translated by `steps` grid points.
fn shifted_rows(x: &Tensor, idx: &[usize], steps: i64) -> Tensor {
    let mut out = x.gather_rows(idx);
    if steps == 0 {
        return out;
    }
    let w = out.numel() / idx.len().max(1);
    for r in 0..idx.len() {
        let row = shift_spectrum(&out.data()[r * w..(r + 1) * w], steps);
        out.data_mut()[r * w..(r + 1) * w].copy_from_slice(&row);
    }
    out
}

fn shifted_probs(net: &Sequential, x: &Tensor, idx: &[usize], steps: i64, batch: usize) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let xs = shifted_rows(x, idx, steps);
    let local: Vec<usize> = (0..idx.len()).collect();
    Ok(predict_proba(net, &xs, &local, batch)?)
}

/// Trains one CNN per `(m, n)` variant on unshifted pool rows and scores the
/// test rows at each shift, averaging the `+Δ` and `−Δ` results.
pub fn run_shift_robustness(ds: &SpectralDataset, proto: &ShiftProtocol, cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    check_dataset(ds, cfg)?;
    if !cfg.holdout_test {
        return Err(ExperimentError::InvalidConfig("shift robustness needs holdout_test".into()));
    }
    let start = Instant::now();
    let x = dataset_tensor(ds);
    let labels = &ds.labels;
    let part = partition(labels, cfg);
    let truth: Vec<usize> = part.test.iter().map(|&i| labels[i]).collect();
    let steps_of = |s: f64| (s / ds.grid_step).round() as i64;
    if let Some(&s) = proto.shifts.iter().find(|&&s| s < 0.0 || steps_of(s) as usize >= ds.target_len) {
        return Err(ExperimentError::InvalidConfig(format!("shift {s} cm⁻¹ outside the grid")));
    }
    let opts = train_options(cfg);
    type VariantOut = (super::report::FoldMetrics, Vec<ReportCell>, serde_json::Value);
    let results = par::map_indexed(proto.variants.len(), cfg.jobs, |v| -> Result<VariantOut, ExperimentError> {
        let (m, n) = proto.variants[v];
        let label = variant_label(m, n);
        let mut cnn = cnn_for(&cfg.cnn, ds);
        cnn.pool_size = m;
        cnn.num_conv_blocks = n;
        let mut net = build_cnn(&cnn, derive_seed(cfg.seed, "init", v as u64))?;
        let sched = job_schedule(cfg, "shift", v as u64);
        let targets: Vec<usize> = part.pool.iter().map(|&i| labels[i]).collect();
        let log = fit(&mut net, &x, &part.pool, &targets, ds.num_classes(), cfg, &sched, &opts)?;
        let mut cells = Vec::new();
        let mut probes = serde_json::Map::new();
        let mut unshifted = None;
        for &s in &proto.shifts {
            let steps = steps_of(s);
            let signs: &[i64] = if steps == 0 { &[0] } else { &[1, -1] };
            let (mut t1, mut t3, mut gap) = (0.0, 0.0, 0.0);
            let mut probe_lists = Vec::new();
            for &sign in signs {
                let probs = shifted_probs(&net, &x, &part.test, sign * steps, cfg.eval_batch)?;
                let (a, b, c) = score(&probs, &truth);
                t1 += a / signs.len() as f64;
                t3 += b / signs.len() as f64;
                gap += c / signs.len() as f64;
                for (p, &row) in probs.iter().zip(&part.test).take(proto.probes) {
                    let top: Vec<&str> = ranked_classes(p).into_iter().take(3).map(|c| ds.class_names[c].as_str()).collect();
                    probe_lists.push(serde_json::json!({
                        "row": ds.provenance[row],
                        "true": ds.class_names[labels[row]],
                        "delta_cm": sign as f64 * s,
                        "top3": top,
                    }));
                }
            }
            if steps == 0 {
                unshifted = Some((t1, t3, gap));
            }
            cells.push(ReportCell::new(&label, shift_label(s), &[("top1", t1), ("top3", t3), ("confidence_gap", gap)]));
            probes.insert(shift_label(s), serde_json::Value::Array(probe_lists));
        }
        let base = match unshifted {
            Some(u) => u,
            None => score(&shifted_probs(&net, &x, &part.test, 0, cfg.eval_batch)?, &truth),
        };
        let mut fm = fold_metrics(v, &label, base, part.pool.len(), part.test.len());
        fm.loss_curve = log.epochs;
        Ok((fm, cells, serde_json::Value::Object(probes)))
    });
    let mut report = new_report("shift_robustness", ds, cfg, proto);
    let mut probes = serde_json::Map::new();
    for (v, r) in results.into_iter().enumerate() {
        let (fm, cells, p) = r?;
        report.folds.push(fm);
        report.cells.extend(cells);
        let (m, n) = proto.variants[v];
        probes.insert(variant_label(m, n), p);
    }
    report.extras.insert("probes".into(), serde_json::Value::Object(probes));
    report.notes.push("shifted accuracies average the +Δ and −Δ translations; vacated points are zero".into());
    report.finalize();
    report.timing.insert("wall_clock_s".into(), start.elapsed().as_secs_f64());
    Ok(report)
}
