//! Experiment reports: JSON, aligned text tables and loss-curve CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::mean_std;
use super::train::EpochLog;
use super::ExperimentError;
use crate::fsutil::write_atomic;
use crate::preprocess::SpectralDataset;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub manifest_hash: String,
    pub rows: usize,
    pub classes: usize,
    pub target_len: usize,
}

impl DatasetSummary {
    pub fn of(ds: &SpectralDataset) -> Self {
        DatasetSummary {
            manifest_hash: ds.manifest_hash.clone(),
            rows: ds.len(),
            classes: ds.num_classes(),
            target_len: ds.target_len,
        }
    }
}

/// Metrics of one trained model on one evaluation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    /// Which rows were scored, e.g. `cv` (held-out fold) or `test`.
    pub split: String,
    pub top1: f64,
    /// `None` for classifiers without a class ranking (plain KNN, SVM).
    pub top3: Option<f64>,
    pub confidence_gap: Option<f64>,
    pub train_size: usize,
    pub eval_size: usize,
    pub loss_curve: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub split: String,
    pub n: usize,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub top3_mean: Option<f64>,
    pub top3_std: Option<f64>,
    pub confidence_gap_mean: Option<f64>,
}

impl Aggregate {
    pub fn over(folds: &[FoldMetrics], split: &str) -> Option<Self> {
        let sel: Vec<&FoldMetrics> = folds.iter().filter(|f| f.split == split).collect();
        if sel.is_empty() {
            return None;
        }
        let (top1_mean, top1_std) = mean_std(&sel.iter().map(|f| f.top1).collect::<Vec<_>>());
        let top3: Option<Vec<f64>> = sel.iter().map(|f| f.top3).collect();
        let top3 = top3.map(|v| mean_std(&v));
        let gaps: Option<Vec<f64>> = sel.iter().map(|f| f.confidence_gap).collect();
        Some(Aggregate {
            split: split.to_string(),
            n: sel.len(),
            top1_mean,
            top1_std,
            top3_mean: top3.map(|t| t.0),
            top3_std: top3.map(|t| t.1),
            confidence_gap_mean: gaps.map(|g| mean_std(&g).0),
        })
    }
}

/// One cell of an experiment-specific table (row × column → metrics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub row: String,
    pub column: String,
    pub metrics: BTreeMap<String, f64>,
}

impl ReportCell {
    pub fn new(row: impl Into<String>, column: impl Into<String>, metrics: &[(&str, f64)]) -> Self {
        ReportCell {
            row: row.into(),
            column: column.into(),
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment_kind: String,
    pub seed: u64,
    pub dataset: DatasetSummary,
    /// Flat `key=value` snapshot of the configuration that produced this.
    pub config: BTreeMap<String, String>,
    pub folds: Vec<FoldMetrics>,
    /// One aggregate per split label present in `folds`, in first-seen order.
    pub aggregates: Vec<Aggregate>,
    pub cells: Vec<ReportCell>,
    pub notes: Vec<String>,
    pub extras: BTreeMap<String, serde_json::Value>,
    /// Wall-clock measurements; kept out of the JSON so reports stay
    /// reproducible byte-for-byte.
    #[serde(skip)]
    pub timing: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(kind: &str, seed: u64, dataset: DatasetSummary, config: BTreeMap<String, String>) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment_kind: kind.to_string(),
            seed,
            dataset,
            config,
            folds: Vec::new(),
            aggregates: Vec::new(),
            cells: Vec::new(),
            notes: Vec::new(),
            extras: BTreeMap::new(),
            timing: BTreeMap::new(),
        }
    }

    /// Recomputes `aggregates` from `folds`.
    pub fn finalize(&mut self) {
        let mut splits: Vec<String> = Vec::new();
        for f in &self.folds {
            if !splits.contains(&f.split) {
                splits.push(f.split.clone());
            }
        }
        self.aggregates = splits.iter().filter_map(|s| Aggregate::over(&self.folds, s)).collect();
    }

    pub fn aggregate(&self, split: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.split == split)
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.row == row && c.column == column)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let r: ExperimentReport = serde_json::from_str(text).map_err(|e| ExperimentError::Report(e.to_string()))?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ExperimentError::Report(format!("unsupported schema version {}", r.schema_version)));
        }
        Ok(r)
    }

    /// Column-aligned text: one row per fold, one per aggregate, then the
    /// cell table pivoted by row and column labels.
    pub fn to_table(&self) -> String {
        let pct = |v: f64| format!("{:.1}", 100.0 * v);
        let gap = |g: Option<f64>| g.map_or("-".to_string(), |v| format!("{v:.3}"));
        let mut rows: Vec<Vec<String>> = vec![["fold", "split", "top1", "top3", "conf_gap", "train", "eval", "epochs"]
            .iter()
            .map(|s| s.to_string())
            .collect()];
        for f in &self.folds {
            rows.push(vec![
                f.fold.to_string(),
                f.split.clone(),
                pct(f.top1),
                f.top3.map_or("-".to_string(), pct),
                gap(f.confidence_gap),
                f.train_size.to_string(),
                f.eval_size.to_string(),
                f.loss_curve.len().to_string(),
            ]);
        }
        for a in &self.aggregates {
            rows.push(vec![
                "mean".into(),
                a.split.clone(),
                format!("{}±{}", pct(a.top1_mean), pct(a.top1_std)),
                match (a.top3_mean, a.top3_std) {
                    (Some(m), Some(s)) => format!("{}±{}", pct(m), pct(s)),
                    _ => "-".to_string(),
                },
                gap(a.confidence_gap_mean),
                "".into(),
                "".into(),
                "".into(),
            ]);
        }
        let mut out = format!("# {} (seed {})\n", self.experiment_kind, self.seed);
        if self.folds.is_empty() {
            rows.truncate(0);
        }
        out.push_str(&align(&rows));
        if !self.cells.is_empty() {
            let mut row_keys: Vec<&str> = Vec::new();
            let mut col_keys: Vec<&str> = Vec::new();
            for c in &self.cells {
                if !row_keys.contains(&c.row.as_str()) {
                    row_keys.push(&c.row);
                }
                if !col_keys.contains(&c.column.as_str()) {
                    col_keys.push(&c.column);
                }
            }
            let mut t = vec![std::iter::once(String::new()).chain(col_keys.iter().map(|s| s.to_string())).collect::<Vec<_>>()];
            for r in &row_keys {
                let mut line = vec![r.to_string()];
                for c in &col_keys {
                    line.push(self.cell(r, c).map_or("-".to_string(), format_metrics));
                }
                t.push(line);
            }
            if !out.ends_with("\n\n") && !rows.is_empty() {
                out.push('\n');
            }
            out.push_str(&align(&t));
        }
        out
    }

    /// `fold,split,epoch,train_loss,val_loss,lr` for every recorded epoch.
    pub fn loss_curves_csv(&self) -> String {
        let mut out = String::from("fold,split,epoch,train_loss,val_loss,lr\n");
        for f in &self.folds {
            for e in &f.loss_curve {
                let _ = writeln!(out, "{},{},{},{},{},{}", f.fold, f.split, e.epoch, e.train_loss, e.val_loss, e.lr);
            }
        }
        out
    }
}

fn format_metrics(c: &ReportCell) -> String {
    match (c.metrics.get("top1"), c.metrics.get("top3")) {
        (Some(a), Some(b)) => format!("{:.1} / {:.1}", 100.0 * a, 100.0 * b),
        (Some(a), None) => format!("{:.1}", 100.0 * a),
        _ => c
            .metrics
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{s:<w$}", w = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Writes `<stem>.json`, `<stem>.txt` and `<stem>_loss.csv` into `dir`
/// (each via temp file + rename).
pub fn emit_report(report: &ExperimentReport, dir: &Path, stem: &str, formats: &[ReportFormat]) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for f in formats {
        let (path, body) = match f {
            ReportFormat::Json => (dir.join(format!("{stem}.json")), report.to_json()),
            ReportFormat::Table => (dir.join(format!("{stem}.txt")), report.to_table()),
            ReportFormat::Csv => (dir.join(format!("{stem}_loss.csv")), report.loss_curves_csv()),
        };
        write_atomic(&path, body.as_bytes()).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r = ExperimentReport::new(
            "supervised",
            3,
            DatasetSummary {
                manifest_hash: "abc".into(),
                rows: 10,
                classes: 2,
                target_len: 8,
            },
            BTreeMap::from([("seed".to_string(), "3".to_string())]),
        );
        for (i, t) in [0.5, 0.75].iter().enumerate() {
            r.folds.push(FoldMetrics {
                fold: i,
                split: "cv".into(),
                top1: *t,
                top3: Some(1.0),
                confidence_gap: Some(0.25),
                train_size: 8,
                eval_size: 2,
                loss_curve: vec![EpochLog {
                    epoch: 1,
                    train_loss: 0.5,
                    val_loss: 0.6,
                    lr: 1e-3,
                }],
            });
        }
        r.cells.push(ReportCell::new("m=2", "shift=30", &[("top1", 0.1), ("top3", 0.2)]));
        r.finalize();
        r
    }

    #[test]
    fn aggregate_is_fold_mean_and_json_round_trips() {
        let r = sample();
        let a = r.aggregate("cv").unwrap();
        assert!((a.top1_mean - 0.625).abs() < 1e-12);
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn table_is_aligned() {
        let t = sample().to_table();
        let lines: Vec<&str> = t.lines().skip(1).take(4).collect();
        let col = lines[0].find("top1").unwrap();
        assert!(lines[1..].iter().all(|l| l.len() > col && &l[col - 2..col] == "  "));
        assert!(t.contains("10.0 / 20.0"));
    }

    #[test]
    fn emit_writes_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&sample(), dir.path(), "r", &[ReportFormat::Json, ReportFormat::Table, ReportFormat::Csv]).unwrap();
        assert_eq!(paths.len(), 3);
        let csv = std::fs::read_to_string(&paths[2]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().contains(".tmp")));
    }
}
