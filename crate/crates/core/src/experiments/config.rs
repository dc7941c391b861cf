use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ExperimentError;
use crate::models::CnnConfig;
use crate::nn::TrainSchedule;
use crate::preprocess::AugmentationSpec;

/// Settings shared by every protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Cross-validation folds; also the fold count used to cut the test set.
    pub folds: usize,
    /// Hold one stratified fold out as a fixed test set.
    pub holdout_test: bool,
    /// Per-class fraction of each training split used for early stopping.
    pub val_fraction: f64,
    /// Per-job training schedule. Its `seed` is replaced by job seeds
    /// derived from `seed`.
    pub schedule: TrainSchedule,
    /// Network template; `input_len` and `num_classes` come from the data.
    pub cnn: CnnConfig,
    pub augment: bool,
    pub augment_prob: f64,
    pub augmentation: AugmentationSpec,
    pub eval_batch: usize,
    /// Worker threads for independent jobs. Does not affect results.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            folds: 5,
            holdout_test: true,
            val_fraction: 0.1,
            schedule: TrainSchedule::default(),
            cnn: CnnConfig::default(),
            augment: false,
            augment_prob: 0.5,
            augmentation: AugmentationSpec::default(),
            eval_batch: 64,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.folds < 2 {
            return Err(ExperimentError::InvalidConfig("folds must be ≥ 2".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ExperimentError::InvalidConfig(format!("val_fraction={}", self.val_fraction)));
        }
        if !(0.0..=1.0).contains(&self.augment_prob) {
            return Err(ExperimentError::InvalidConfig(format!("augment_prob={}", self.augment_prob)));
        }
        self.schedule.validate()?;
        if self.augment {
            self.augmentation
                .validate()
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

/// Flattens a serializable value into dotted `key → value` strings. Scalars
/// are written bare; arrays and nulls as JSON text.
pub fn to_flat_kv<T: Serialize>(value: &T) -> BTreeMap<String, String> {
    fn walk(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::String(s) => {
                out.insert(prefix.to_string(), s.clone());
            }
            other => {
                out.insert(prefix.to_string(), other.to_string());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", &serde_json::to_value(value).expect("config serializes"), &mut out);
    out
}

/// Overrides fields of `base` from dotted keys. Values are parsed as JSON
/// where possible and fall back to strings; unknown keys are rejected.
pub fn apply_flat_kv<T: Serialize + DeserializeOwned>(base: &T, kv: &BTreeMap<String, String>) -> Result<T, ExperimentError> {
    let mut root = serde_json::to_value(base).expect("config serializes");
    for (key, raw) in kv {
        let mut node = &mut root;
        for part in key.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown config key `{key}`")))?;
        }
        let parsed = match node {
            Value::String(_) => Value::String(raw.clone()),
            _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone())),
        };
        *node = parsed;
    }
    serde_json::from_value(root).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
}

/// Deterministic per-job seed.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut x = base ^ 0x9E37_79B9_7F4A_7C15;
    for b in tag.bytes().chain(index.to_le_bytes()) {
        x = (x ^ b as u64).wrapping_mul(0x100_0000_01B3);
        x ^= x >> 29;
    }
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_kv_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.schedule.max_epochs = 7;
        cfg.cnn.pool_size = 64;
        let kv = to_flat_kv(&cfg);
        assert_eq!(kv["schedule.max_epochs"], "7");
        assert_eq!(kv["cnn.conv_channels"], "[16,32,64]");
        let back: ExperimentConfig = apply_flat_kv(&ExperimentConfig::default(), &kv).unwrap();
        assert_eq!(back, cfg);
        let mut bad = BTreeMap::new();
        bad.insert("schedule.nope".to_string(), "1".to_string());
        assert!(apply_flat_kv(&cfg, &bad).is_err());
    }

    #[test]
    fn seeds_differ_by_tag_and_index() {
        assert_ne!(derive_seed(1, "fold", 0), derive_seed(1, "fold", 1));
        assert_ne!(derive_seed(1, "fold", 0), derive_seed(1, "val", 0));
        assert_eq!(derive_seed(1, "fold", 0), derive_seed(1, "fold", 0));
    }
}
