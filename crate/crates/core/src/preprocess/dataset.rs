//! Fixed-grid spectral datasets and their on-disk form.
//!
//! Binary layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `SFDSET1\n`                          |
//! | 8      | 8    | `u64` header length `H` in bytes           |
//! | 16     | H    | UTF-8 JSON header (see [`DatasetHeader`])  |
//! | 16+H   | 4·R·L| `f32` rows, row-major, R rows of L samples |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::ingest::RawCorpus;

use super::{normalize, resample, NormMode, PreprocessConfig, PreprocessError};

pub const DATASET_MAGIC: &[u8; 8] = b"SFDSET1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub grid_start: f64,
    pub grid_step: f64,
    pub target_len: usize,
    pub n_rows: usize,
    pub norm_mode: NormMode,
    pub n_min: usize,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    pub labels: Vec<usize>,
    pub provenance: Vec<String>,
    pub source_paths: Vec<String>,
    pub manifest_hash: String,
}

/// Normalized spectra on a shared grid, with labels and a class table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDataset {
    pub grid_start: f64,
    pub grid_step: f64,
    pub target_len: usize,
    pub norm_mode: NormMode,
    pub n_min: usize,
    /// Row-major `[n_rows × target_len]`.
    pub rows: Vec<f32>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub class_counts: Vec<usize>,
    /// RRUFF id of each row.
    pub provenance: Vec<String>,
    pub source_paths: Vec<String>,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedSpectrum {
    pub source_path: String,
    pub reason: String,
}

impl SpectralDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.target_len..(i + 1) * self.target_len]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.target_len)
            .map(|i| self.grid_start + i as f64 * self.grid_step)
            .collect()
    }

    /// Builds a dataset directly from gridded rows; used for derived and
    /// synthetic datasets. Class counts are recomputed from `labels`.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        grid_start: f64,
        grid_step: f64,
    ) -> Self {
        let target_len = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == target_len), "ragged rows");
        assert_eq!(rows.len(), labels.len());
        let mut class_counts = vec![0; class_names.len()];
        for &l in &labels {
            class_counts[l] += 1;
        }
        let n = rows.len();
        SpectralDataset {
            grid_start,
            grid_step,
            target_len,
            norm_mode: NormMode::MinMax,
            n_min: 1,
            rows: rows.into_iter().flatten().map(|v| v as f32).collect(),
            labels,
            class_names,
            class_counts,
            provenance: (0..n).map(|i| format!("row{i}")).collect(),
            source_paths: (0..n).map(|i| format!("row{i}")).collect(),
            manifest_hash: String::new(),
        }
    }

    /// Row subset with classes re-indexed densely in original order.
    pub fn subset(&self, indices: &[usize]) -> SpectralDataset {
        let mut present: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        present.sort_unstable();
        present.dedup();
        let remap: BTreeMap<usize, usize> = present.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let mut rows = Vec::with_capacity(indices.len() * self.target_len);
        for &i in indices {
            rows.extend_from_slice(self.row(i));
        }
        let labels: Vec<usize> = indices.iter().map(|&i| remap[&self.labels[i]]).collect();
        let mut class_counts = vec![0; present.len()];
        for &l in &labels {
            class_counts[l] += 1;
        }
        SpectralDataset {
            rows,
            labels,
            class_names: present.iter().map(|&c| self.class_names[c].clone()).collect(),
            class_counts,
            provenance: indices.iter().map(|&i| self.provenance[i].clone()).collect(),
            source_paths: indices.iter().map(|&i| self.source_paths[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> SpectralDataset {
        SpectralDataset {
            grid_start: self.grid_start,
            grid_step: self.grid_step,
            target_len: self.target_len,
            norm_mode: self.norm_mode,
            n_min: self.n_min,
            rows: Vec::new(),
            labels: Vec::new(),
            class_names: Vec::new(),
            class_counts: Vec::new(),
            provenance: Vec::new(),
            source_paths: Vec::new(),
            manifest_hash: self.manifest_hash.clone(),
        }
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            version: 1,
            grid_start: self.grid_start,
            grid_step: self.grid_step,
            target_len: self.target_len,
            n_rows: self.len(),
            norm_mode: self.norm_mode,
            n_min: self.n_min,
            class_names: self.class_names.clone(),
            class_counts: self.class_counts.clone(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
            source_paths: self.source_paths.clone(),
            manifest_hash: self.manifest_hash.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.rows.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PreprocessError> {
        let bad = |m: &str| PreprocessError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != DATASET_MAGIC {
            return Err(bad("missing SFDSET1 magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let h: DatasetHeader =
            serde_json::from_slice(body).map_err(|e| PreprocessError::Format(e.to_string()))?;
        let data = &bytes[16 + hlen..];
        if data.len() != 4 * h.n_rows * h.target_len || h.labels.len() != h.n_rows {
            return Err(bad("row matrix size does not match header"));
        }
        if h.labels.iter().any(|&l| l >= h.class_names.len()) {
            return Err(bad("label out of range"));
        }
        let rows = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(SpectralDataset {
            grid_start: h.grid_start,
            grid_step: h.grid_step,
            target_len: h.target_len,
            norm_mode: h.norm_mode,
            n_min: h.n_min,
            rows,
            labels: h.labels,
            class_names: h.class_names,
            class_counts: h.class_counts,
            provenance: h.provenance,
            source_paths: h.source_paths,
            manifest_hash: h.manifest_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PreprocessError> {
        write_atomic(path, &self.to_bytes()).map_err(|e| PreprocessError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let bytes = fs::read(path).map_err(|e| PreprocessError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Resamples and normalizes every spectrum, drops those that cannot be
/// processed, then prunes classes below `n_min` members. Classes are indexed
/// in sorted name order.
pub fn build_dataset(
    corpus: &RawCorpus,
    cfg: &PreprocessConfig,
) -> Result<(SpectralDataset, Vec<DroppedSpectrum>), PreprocessError> {
    cfg.validate()?;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in &corpus.spectra {
        match resample(s, cfg).and_then(|r| normalize(&r, cfg.norm_mode)) {
            Ok(row) if row.iter().all(|v| v.is_finite()) => kept.push((s, row)),
            Ok(_) => dropped.push(DroppedSpectrum {
                source_path: s.source_path.clone(),
                reason: "non-finite values".into(),
            }),
            Err(e) => dropped.push(DroppedSpectrum {
                source_path: s.source_path.clone(),
                reason: e.to_string(),
            }),
        }
    }
    for d in &dropped {
        log::warn!("dropped {}: {}", d.source_path, d.reason);
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (s, _) in &kept {
        *counts.entry(s.mineral_name.as_str()).or_default() += 1;
    }
    let class_names: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c >= cfg.n_min)
        .map(|(n, _)| n.to_string())
        .collect();
    if class_names.is_empty() {
        return Err(PreprocessError::EmptyAfterPruning(cfg.n_min));
    }
    let index: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut ds = SpectralDataset {
        grid_start: cfg.range_lo,
        grid_step: cfg.grid_step,
        target_len: cfg.target_len,
        norm_mode: cfg.norm_mode,
        n_min: cfg.n_min,
        rows: Vec::new(),
        labels: Vec::new(),
        class_counts: vec![0; class_names.len()],
        class_names: Vec::new(),
        provenance: Vec::new(),
        source_paths: Vec::new(),
        manifest_hash: corpus.manifest_hash.clone(),
    };
    for (s, row) in kept {
        let Some(&label) = index.get(s.mineral_name.as_str()) else {
            continue;
        };
        ds.rows.extend(row.iter().map(|&v| v as f32));
        ds.labels.push(label);
        ds.class_counts[label] += 1;
        ds.provenance.push(s.rruff_id.clone());
        ds.source_paths.push(s.source_path.clone());
    }
    ds.class_names = class_names;
    Ok((ds, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Spectrum, SpectrumKind};

    fn spectrum(name: &str, i: usize, lo: f64, hi: f64) -> Spectrum {
        let points = (0..=((hi - lo) as usize))
            .map(|k| {
                let x = lo + k as f64;
                (x, 10.0 + ((x + i as f64) * 0.05).sin())
            })
            .collect();
        Spectrum {
            mineral_name: name.into(),
            rruff_id: format!("R{i}"),
            kind: SpectrumKind::Raw,
            points,
            source_path: format!("{name}_{i}__Raman_Data_RAW.txt"),
            metadata: Default::default(),
        }
    }

    fn corpus() -> RawCorpus {
        let mut v = Vec::new();
        for i in 0..9 {
            v.push(spectrum("Calcite", i, 150.0, 1700.0));
        }
        for i in 0..8 {
            v.push(spectrum("Albite", 100 + i, 300.0, 1200.0));
        }
        for i in 0..7 {
            v.push(spectrum("Zircon", 200 + i, 150.0, 1700.0));
        }
        // Out-of-range spectrum is dropped, leaving Albite still at 8.
        v.push(spectrum("Albite", 300, 1700.0, 1800.0));
        RawCorpus::from_spectra(v).unwrap()
    }

    #[test]
    fn build_prunes_and_normalizes() {
        let (ds, dropped) = build_dataset(&corpus(), &PreprocessConfig::default()).unwrap();
        assert_eq!(dropped.len(), 1);
        assert_eq!(ds.class_names, vec!["Albite", "Calcite"]);
        assert_eq!(ds.class_counts, vec![8, 9]);
        assert_eq!(ds.len(), 17);
        assert_eq!(ds.target_len, 1392);
        for i in 0..ds.len() {
            let r = ds.row(i);
            let lo = r.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = r.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
        assert!(ds.class_counts.iter().all(|&c| c >= 8));
    }

    #[test]
    fn bytes_round_trip() {
        let (ds, _) = build_dataset(&corpus(), &PreprocessConfig::default()).unwrap();
        let back = SpectralDataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        let mut bytes = ds.to_bytes();
        bytes.truncate(bytes.len() - 4);
        assert!(SpectralDataset::from_bytes(&bytes).is_err());
    }

    #[test]
    fn subset_reindexes_classes() {
        let (ds, _) = build_dataset(&corpus(), &PreprocessConfig::default()).unwrap();
        let calcite: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 1).take(3).collect();
        let sub = ds.subset(&calcite);
        assert_eq!(sub.class_names, vec!["Calcite"]);
        assert_eq!(sub.labels, vec![0, 0, 0]);
        assert_eq!(sub.row(0), ds.row(calcite[0]));
    }
}
