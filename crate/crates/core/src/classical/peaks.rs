//! Peak detectors: Ricker-wavelet ridge lines and prominence-filtered local maxima.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakMethod {
    CwtRicker,
    LocalMaxima,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakDetectorConfig {
    pub method: PeakMethod,
    /// Ricker widths in grid steps, strictly increasing.
    pub cwt_widths: Vec<usize>,
    /// A ridge line is dropped after this many consecutive width levels without a match.
    pub ridge_gap_thresh: usize,
    /// Minimum number of width levels a ridge line must span; `None` means ⌈|widths|/4⌉.
    pub min_ridge_length: Option<usize>,
    pub min_snr: f64,
    pub noise_percentile: f64,
    /// Minimum width at half prominence for local maxima, in grid steps.
    pub lm_width: f64,
    /// Minimum prominence as a fraction of `max(row)`; `None` means `1/len(row)`.
    pub lm_prominence_fraction: Option<f64>,
}

impl Default for PeakDetectorConfig {
    fn default() -> Self {
        PeakDetectorConfig {
            method: PeakMethod::CwtRicker,
            cwt_widths: (10..=20).collect(),
            ridge_gap_thresh: 2,
            min_ridge_length: None,
            min_snr: 1.0,
            noise_percentile: 10.0,
            lm_width: 10.0,
            lm_prominence_fraction: None,
        }
    }
}

impl PeakDetectorConfig {
    pub fn local_maxima() -> Self {
        PeakDetectorConfig {
            method: PeakMethod::LocalMaxima,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cwt_widths.is_empty()
            || self.cwt_widths[0] == 0
            || self.cwt_widths.windows(2).any(|w| w[1] <= w[0])
        {
            return Err("cwt_widths must be nonempty, strictly increasing and ≥1".into());
        }
        Ok(())
    }
}

pub fn detect_peaks(row: &[f64], cfg: &PeakDetectorConfig) -> Vec<usize> {
    match cfg.method {
        PeakMethod::CwtRicker => detect_peaks_cwt(row, cfg),
        PeakMethod::LocalMaxima => detect_peaks_local(row, cfg),
    }
}

/// Sampled Ricker (Mexican-hat) wavelet of scale `a`, odd length, centred.
pub fn ricker(points: usize, a: f64) -> Vec<f64> {
    let amp = 2.0 / ((3.0 * a).sqrt() * std::f64::consts::PI.powf(0.25));
    let centre = (points as f64 - 1.0) / 2.0;
    (0..points)
        .map(|i| {
            let x = i as f64 - centre;
            let xsq = x * x;
            let wsq = a * a;
            amp * (1.0 - xsq / wsq) * (-xsq / (2.0 * wsq)).exp()
        })
        .collect()
}

/// One CWT row per width: the row correlated ("same" length, zero padded)
/// with a Ricker wavelet spanning ten widths.
pub fn cwt(row: &[f64], widths: &[usize]) -> Vec<Vec<f64>> {
    let n = row.len();
    widths
        .iter()
        .map(|&w| {
            let mut points = (10 * w + 1).min(n.max(1));
            if points % 2 == 0 {
                points -= 1;
            }
            let kernel = ricker(points, w as f64);
            let half = (points / 2) as isize;
            (0..n as isize)
                .map(|t| {
                    let lo = (t - half).max(0);
                    let hi = (t + half).min(n as isize - 1);
                    (lo..=hi)
                        .map(|s| row[s as usize] * kernel[(s - t + half) as usize])
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn relative_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .collect()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

struct Ridge {
    /// `(width_level, column)` from the largest width downwards.
    points: Vec<(usize, usize)>,
    gap: usize,
}

/// Wavelet peak detection.
///
/// Local maxima of each CWT row are linked from the widest scale down into
/// ridge lines (a maximum joins the nearest open ridge within `width/4`
/// columns). Ridges survive if they span enough width levels and their peak
/// response clears the noise floor, estimated as a percentile of |CWT| at the
/// smallest width in a window of `len/20` samples. The reported position is
/// the ridge column at its smallest width.
pub fn detect_peaks_cwt(row: &[f64], cfg: &PeakDetectorConfig) -> Vec<usize> {
    let n = row.len();
    let widths = &cfg.cwt_widths;
    if n < 3 || widths.is_empty() {
        return Vec::new();
    }
    let coeffs = cwt(row, widths);
    let levels = widths.len();

    let mut open: Vec<Ridge> = Vec::new();
    let mut closed: Vec<Ridge> = Vec::new();
    for level in (0..levels).rev() {
        let max_dist = widths[level] as f64 / 4.0;
        for r in &mut open {
            r.gap += 1;
        }
        let mut matched = vec![false; open.len()];
        for col in relative_maxima(&coeffs[level]) {
            let nearest = open
                .iter()
                .enumerate()
                .filter(|(i, _)| !matched[*i])
                .map(|(i, r)| (i, (r.points.last().unwrap().1 as f64 - col as f64).abs()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            match nearest {
                Some((i, d)) if d <= max_dist => {
                    open[i].points.push((level, col));
                    open[i].gap = 0;
                    matched[i] = true;
                }
                _ => {
                    open.push(Ridge {
                        points: vec![(level, col)],
                        gap: 0,
                    });
                    matched.push(true);
                }
            }
        }
        let (keep, done): (Vec<Ridge>, Vec<Ridge>) =
            open.into_iter().partition(|r| r.gap <= cfg.ridge_gap_thresh);
        open = keep;
        closed.extend(done);
    }
    closed.extend(open);

    let min_len = cfg
        .min_ridge_length
        .unwrap_or_else(|| levels.div_ceil(4))
        .max(1);
    let window = n.div_ceil(20).max(1);
    let smallest: Vec<f64> = coeffs[0].iter().map(|v| v.abs()).collect();
    let noise_at = |col: usize| {
        let lo = col.saturating_sub(window / 2);
        let hi = (col + window.div_ceil(2)).min(n);
        let mut w = smallest[lo..hi].to_vec();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        percentile(&w, cfg.noise_percentile)
    };

    let mut peaks: Vec<usize> = closed
        .iter()
        .filter(|r| r.points.len() >= min_len)
        .filter_map(|r| {
            let &(_, col) = r.points.last().unwrap();
            let strength = r
                .points
                .iter()
                .map(|&(lvl, c)| coeffs[lvl][c])
                .fold(f64::NEG_INFINITY, f64::max);
            if !(strength > 0.0) {
                return None;
            }
            let noise = noise_at(col);
            let snr = if noise > 0.0 { strength / noise } else { f64::INFINITY };
            (snr >= cfg.min_snr).then_some(col)
        })
        .collect();
    peaks.sort_unstable();
    peaks.dedup();
    peaks
}

/// Local maxima filtered by prominence and by width at half prominence.
pub fn detect_peaks_local(row: &[f64], cfg: &PeakDetectorConfig) -> Vec<usize> {
    let n = row.len();
    if n < 3 {
        return Vec::new();
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_prom = max * cfg.lm_prominence_fraction.unwrap_or(1.0 / n as f64);

    // Strict maxima; flat tops count once, at the plateau midpoint.
    let mut candidates = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if row[i - 1] < row[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && row[ahead] == row[i] {
                ahead += 1;
            }
            if row[ahead] < row[i] {
                candidates.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }

    candidates
        .into_iter()
        .filter(|&p| {
            let h = row[p];
            let mut left_min = h;
            let mut j = p;
            let mut left_base = p;
            while j > 0 && row[j - 1] <= h {
                j -= 1;
                if row[j] < left_min {
                    left_min = row[j];
                    left_base = j;
                }
            }
            let mut right_min = h;
            let mut j = p;
            let mut right_base = p;
            while j + 1 < n && row[j + 1] <= h {
                j += 1;
                if row[j] < right_min {
                    right_min = row[j];
                    right_base = j;
                }
            }
            let prominence = h - left_min.max(right_min);
            if !(prominence >= min_prom) || prominence <= 0.0 {
                return false;
            }
            let level = h - 0.5 * prominence;
            let mut l = p;
            while l > left_base && row[l] > level {
                l -= 1;
            }
            let mut left_ip = l as f64;
            if row[l] < level {
                left_ip += (level - row[l]) / (row[l + 1] - row[l]);
            }
            let mut r = p;
            while r < right_base && row[r] > level {
                r += 1;
            }
            let mut right_ip = r as f64;
            if row[r] < level {
                right_ip -= (level - row[r]) / (row[r - 1] - row[r]);
            }
            right_ip - left_ip >= cfg.lm_width - 1e-9
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, centres: &[usize], sigma: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                centres
                    .iter()
                    .map(|&c| {
                        let d = i as f64 - c as f64;
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    })
                    .sum()
            })
            .collect()
    }

    /// Independent dense oracle: continuous Ricker response evaluated over the
    /// whole row (no truncation) at every width; returns the column of the
    /// largest response summed across widths near `guess`.
    fn dense_cwt_argmax(row: &[f64], widths: &[usize], guess: usize, radius: usize) -> usize {
        let lo = guess.saturating_sub(radius);
        let hi = (guess + radius).min(row.len() - 1);
        (lo..=hi)
            .map(|t| {
                let score: f64 = widths
                    .iter()
                    .map(|&w| {
                        let a = w as f64;
                        let c = 2.0 / ((3.0 * a).sqrt() * std::f64::consts::PI.powf(0.25));
                        row.iter()
                            .enumerate()
                            .map(|(s, &x)| {
                                let u = (s as f64 - t as f64) / a;
                                x * c * (1.0 - u * u) * (-u * u / 2.0).exp()
                            })
                            .sum::<f64>()
                    })
                    .sum();
                (t, score)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn zero_row_has_no_peaks() {
        assert!(detect_peaks_cwt(&vec![0.0; 1392], &PeakDetectorConfig::default()).is_empty());
        assert!(detect_peaks_local(&vec![0.0; 1392], &PeakDetectorConfig::local_maxima()).is_empty());
    }

    #[test]
    fn single_gaussian_bump() {
        let cfg = PeakDetectorConfig::default();
        let row = gaussian(1392, &[500], 8.0);
        let oracle = dense_cwt_argmax(&row, &cfg.cwt_widths, 500, 20);
        assert!((oracle as i64 - 500).abs() <= 3, "oracle {oracle}");
        let peaks = detect_peaks_cwt(&row, &cfg);
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert!((peaks[0] as i64 - oracle as i64).abs() <= 3, "{peaks:?} vs {oracle}");
    }

    #[test]
    fn two_bumps_two_peaks() {
        let cfg = PeakDetectorConfig::default();
        let row = gaussian(1392, &[400, 600], 8.0);
        let peaks = detect_peaks_cwt(&row, &cfg);
        assert_eq!(peaks.len(), 2, "{peaks:?}");
        for (p, c) in peaks.iter().zip([400usize, 600]) {
            let oracle = dense_cwt_argmax(&row, &cfg.cwt_widths, c, 20);
            assert!((oracle as i64 - c as i64).abs() <= 3);
            assert!((*p as i64 - c as i64).abs() <= 3, "{peaks:?}");
        }
    }

    #[test]
    fn cwt_positions_scale_invariant() {
        let cfg = PeakDetectorConfig::default();
        let mut row = gaussian(1392, &[150, 420, 433, 900, 1200], 6.0);
        for (i, v) in row.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64) * 0.37).sin().abs();
        }
        let scaled: Vec<f64> = row.iter().map(|v| 5.0 * v).collect();
        let a = detect_peaks_cwt(&row, &cfg);
        assert!(!a.is_empty());
        assert_eq!(a, detect_peaks_cwt(&scaled, &cfg));
    }

    fn triangle(n: usize, start: usize, width: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        let half = width / 2;
        for k in 0..=width {
            let d = (k as i64 - half as i64).unsigned_abs() as usize;
            row[start + k] = (half - d) as f64 / half as f64;
        }
        row
    }

    #[test]
    fn local_maxima_examples() {
        let cfg = PeakDetectorConfig::local_maxima();
        let ramp: Vec<f64> = (0..1392).map(|i| i as f64).collect();
        assert!(detect_peaks_local(&ramp, &cfg).is_empty());
        let tri = triangle(1392, 600, 20);
        assert_eq!(detect_peaks_local(&tri, &cfg), vec![610]);
        let narrow = triangle(1392, 600, 4);
        assert!(detect_peaks_local(&narrow, &cfg).is_empty());
    }

    #[test]
    fn plateau_reported_once_at_midpoint() {
        let mut row = vec![0.0; 200];
        for (k, v) in row.iter_mut().enumerate().take(140).skip(60) {
            *v = if (80..=120).contains(&k) { 1.0 } else { 0.5 };
        }
        let peaks = detect_peaks_local(&row, &PeakDetectorConfig::local_maxima());
        assert_eq!(peaks, vec![100]);
    }

    #[test]
    fn widths_validation() {
        let mut cfg = PeakDetectorConfig::default();
        cfg.validate().unwrap();
        cfg.cwt_widths = vec![10, 10];
        assert!(cfg.validate().is_err());
        cfg.cwt_widths = vec![];
        assert!(cfg.validate().is_err());
    }
}
