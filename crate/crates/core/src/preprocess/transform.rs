use std::collections::BTreeMap;

use crate::ingest::{RawCorpus, Spectrum, SpectrumKind};

use super::{NormMode, PreprocessConfig, PreprocessError};

/// Keeps only spectra whose mineral has at least `n_min` members, preserving order.
pub fn prune_classes(corpus: &RawCorpus, n_min: usize) -> Result<RawCorpus, PreprocessError> {
    if n_min == 0 {
        return Err(PreprocessError::InvalidConfig("n_min must be ≥ 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &corpus.spectra {
        *counts.entry(s.mineral_name.as_str()).or_default() += 1;
    }
    let spectra: Vec<Spectrum> = corpus
        .spectra
        .iter()
        .filter(|s| counts[s.mineral_name.as_str()] >= n_min)
        .cloned()
        .collect();
    if spectra.is_empty() {
        return Err(PreprocessError::EmptyAfterPruning(n_min));
    }
    Ok(RawCorpus {
        spectra,
        manifest_hash: corpus.manifest_hash.clone(),
    })
}

/// Projects a spectrum onto the configured grid by linear interpolation.
/// Grid points outside the spectrum's own shift span are zero; the grid is
/// truncated to `target_len` points from its low end.
pub fn resample(spectrum: &Spectrum, cfg: &PreprocessConfig) -> Result<Vec<f64>, PreprocessError> {
    let pts = &spectrum.points;
    let inside = pts
        .iter()
        .filter(|(x, _)| *x >= cfg.range_lo && *x <= cfg.range_hi)
        .count();
    if inside < 2 {
        return Err(PreprocessError::DegenerateSpectrum(spectrum.source_path.clone()));
    }
    let (first, last) = spectrum.shift_span();
    let mut out = Vec::with_capacity(cfg.target_len);
    let mut j = 0usize;
    for i in 0..cfg.target_len {
        let x = cfg.range_lo + i as f64 * cfg.grid_step;
        if x < first || x > last {
            out.push(0.0);
            continue;
        }
        while j + 1 < pts.len() && pts[j + 1].0 <= x {
            j += 1;
        }
        let (x0, y0) = pts[j];
        if x == x0 || j + 1 == pts.len() {
            out.push(y0);
            continue;
        }
        let (x1, y1) = pts[j + 1];
        let t = (x - x0) / (x1 - x0);
        out.push(y0 + (y1 - y0) * t);
    }
    Ok(out)
}

/// Wraps an already-gridded row back into a `Spectrum` on the grid's shifts.
pub fn grid_spectrum(row: &[f64], cfg: &PreprocessConfig) -> Spectrum {
    Spectrum {
        mineral_name: String::new(),
        rruff_id: String::new(),
        kind: SpectrumKind::Processed,
        points: row
            .iter()
            .enumerate()
            .map(|(i, &y)| (cfg.range_lo + i as f64 * cfg.grid_step, y))
            .collect(),
        source_path: String::new(),
        metadata: BTreeMap::new(),
    }
}

pub fn normalize(row: &[f64], mode: NormMode) -> Result<Vec<f64>, PreprocessError> {
    match mode {
        NormMode::MaxAbs => {
            let m = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m == 0.0 {
                return Err(PreprocessError::ConstantRow);
            }
            Ok(row.iter().map(|v| v / m).collect())
        }
        NormMode::MinMax => {
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(PreprocessError::ConstantRow);
            }
            let span = hi - lo;
            Ok(row
                .iter()
                .map(|&v| {
                    if v == lo {
                        0.0
                    } else if v == hi {
                        1.0
                    } else {
                        (v - lo) / span
                    }
                })
                .collect())
        }
    }
}

/// Translates a row by `delta` grid steps (positive moves content to higher
/// shifts). Vacated positions are zero.
pub fn shift_spectrum<T: Copy + Default>(row: &[T], delta: i64) -> Vec<T> {
    let n = row.len() as i64;
    assert!(delta.abs() < n.max(1), "shift {delta} exceeds row length {n}");
    let mut out = vec![T::default(); row.len()];
    for (i, &v) in row.iter().enumerate() {
        let j = i as i64 + delta;
        if (0..n).contains(&j) {
            out[j as usize] = v;
        }
    }
    out
}
