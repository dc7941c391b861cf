use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    MaxAbs,
    MinMax,
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::MaxAbs => "max_abs",
            NormMode::MinMax => "min_max",
        })
    }
}

impl FromStr for NormMode {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "max_abs" | "maxabs" => Ok(NormMode::MaxAbs),
            "min_max" | "minmax" => Ok(NormMode::MinMax),
            other => Err(PreprocessError::InvalidConfig(format!("unknown norm_mode `{other}`"))),
        }
    }
}

/// Batch preprocessing parameters. Defaults reproduce the 200–1600 cm⁻¹,
/// 1 cm⁻¹ grid truncated to 1392 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub n_min: usize,
    pub range_lo: f64,
    pub range_hi: f64,
    pub grid_step: f64,
    pub target_len: usize,
    pub norm_mode: NormMode,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            n_min: 8,
            range_lo: 200.0,
            range_hi: 1600.0,
            grid_step: 1.0,
            target_len: 1392,
            norm_mode: NormMode::MinMax,
            seed: 0,
        }
    }
}

impl PreprocessConfig {
    /// Number of points on the untruncated grid (1401 with defaults).
    pub fn full_grid_len(&self) -> usize {
        ((self.range_hi - self.range_lo) / self.grid_step).floor() as usize + 1
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.target_len)
            .map(|i| self.range_lo + i as f64 * self.grid_step)
            .collect()
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: String| Err(PreprocessError::InvalidConfig(m));
        if self.n_min == 0 {
            return bad("n_min must be positive".into());
        }
        if !(self.grid_step > 0.0) || !(self.range_hi > self.range_lo) {
            return bad("range must be increasing with a positive step".into());
        }
        if self.full_grid_len() < self.target_len {
            return bad(format!(
                "grid has {} points, fewer than target_len {}",
                self.full_grid_len(),
                self.target_len
            ));
        }
        if self.target_len == 0 || self.target_len % 16 != 0 {
            return bad(format!("target_len {} is not a positive multiple of 16", self.target_len));
        }
        Ok(())
    }

    /// Flat `key=value` lines; `#` starts a comment.
    pub fn to_kv(&self) -> String {
        format!(
            "n_min={}\nrange_lo={}\nrange_hi={}\ngrid_step={}\ntarget_len={}\nnorm_mode={}\nseed={}\n",
            self.n_min,
            self.range_lo,
            self.range_hi,
            self.grid_step,
            self.target_len,
            self.norm_mode,
            self.seed
        )
    }

    pub fn from_kv(text: &str) -> Result<Self, PreprocessError> {
        let mut cfg = PreprocessConfig::default();
        cfg.apply_kv(&parse_kv(text)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides fields from a parsed key/value map. Unknown keys are errors.
    pub fn apply_kv(&mut self, kv: &BTreeMap<String, String>) -> Result<(), PreprocessError> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T, PreprocessError> {
            v.parse()
                .map_err(|_| PreprocessError::InvalidConfig(format!("bad value for {k}: `{v}`")))
        }
        for (k, v) in kv {
            match k.as_str() {
                "n_min" => self.n_min = num(k, v)?,
                "range_lo" => self.range_lo = num(k, v)?,
                "range_hi" => self.range_hi = num(k, v)?,
                "grid_step" => self.grid_step = num(k, v)?,
                "target_len" => self.target_len = num(k, v)?,
                "norm_mode" => self.norm_mode = v.parse()?,
                "seed" => self.seed = num(k, v)?,
                other => {
                    return Err(PreprocessError::InvalidConfig(format!("unknown key `{other}`")))
                }
            }
        }
        Ok(())
    }
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, PreprocessError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            PreprocessError::InvalidConfig(format!("line {}: expected key=value", i + 1))
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_1401_then_1392() {
        let cfg = PreprocessConfig::default();
        assert_eq!(cfg.full_grid_len(), 1401);
        assert_eq!(cfg.target_len, 1392);
        assert_eq!(cfg.target_len % 16, 0);
        let grid = cfg.grid();
        assert_eq!(grid[0], 200.0);
        assert_eq!(*grid.last().unwrap(), 1591.0);
        assert!(grid.windows(2).all(|w| w[1] - w[0] == 1.0));
        cfg.validate().unwrap();
    }

    #[test]
    fn kv_round_trip_and_errors() {
        let mut cfg = PreprocessConfig::default();
        cfg.n_min = 5;
        cfg.norm_mode = NormMode::MaxAbs;
        cfg.seed = 7;
        assert_eq!(PreprocessConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        assert!(PreprocessConfig::from_kv("bogus=1").is_err());
        assert!(PreprocessConfig::from_kv("target_len=1400").is_err());
        assert!(PreprocessConfig::from_kv("target_len=1408").is_err());
    }
}
