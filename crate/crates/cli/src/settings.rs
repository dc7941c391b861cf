//! Resolution of experiment settings: defaults, then `--config`, then
//! `--set`, then dedicated flags and the seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use spectral_forge::experiments::{apply_flat_kv, ExperimentConfig};
use spectral_forge::fsutil::write_atomic;
use spectral_forge::preprocess::parse_kv;

use crate::args::ExperimentArgs;
use crate::CliError;

/// Keys under this prefix describe the invocation and are ignored on reload.
pub const RUN_PREFIX: &str = "run.";
pub const PROTOCOL_PREFIX: &str = "protocol.";
pub const RUN_CONFIG_FILE: &str = "run_config.kv";
pub const TIMING_FILE: &str = "timing.kv";

/// Merged `key → value` from an optional config file and `--set` pairs.
pub fn collect_kv(config: Option<&Path>, sets: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut kv = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            parse_kv(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => BTreeMap::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{s}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

/// Experiment and protocol settings from config file, overrides and flags.
pub fn resolve<P: Serialize + DeserializeOwned + Default>(a: &ExperimentArgs, seed: Option<u64>, jobs: usize) -> Result<(ExperimentConfig, P), CliError> {
    let kv = collect_kv(a.config.as_deref(), &a.sets)?;
    let mut exp_kv = BTreeMap::new();
    let mut proto_kv = BTreeMap::new();
    for (k, v) in kv {
        if k.starts_with(RUN_PREFIX) {
            continue;
        }
        match k.strip_prefix(PROTOCOL_PREFIX) {
            Some(p) => proto_kv.insert(p.to_string(), v),
            None => exp_kv.insert(k, v),
        };
    }
    let usage = |e: spectral_forge::experiments::ExperimentError| CliError::Usage(e.to_string());
    let mut exp: ExperimentConfig = apply_flat_kv(&ExperimentConfig::default(), &exp_kv).map_err(usage)?;
    let proto: P = apply_flat_kv(&P::default(), &proto_kv).map_err(usage)?;
    if let Some(s) = seed {
        exp.seed = s;
    }
    if let Some(e) = a.epochs {
        exp.schedule.max_epochs = e;
    }
    if let Some(b) = a.batch_size {
        exp.schedule.batch_size = b;
    }
    if let Some(f) = a.folds {
        exp.folds = f;
    }
    exp.jobs = jobs;
    exp.validate().map_err(usage)?;
    Ok((exp, proto))
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn kv_text(kv: &BTreeMap<String, String>) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Writes the run config (invocation keys plus the resolved settings).
pub fn write_run_config(path: &Path, run: &[(&str, String)], settings: &BTreeMap<String, String>) -> Result<(), CliError> {
    let mut kv: BTreeMap<String, String> = run.iter().map(|(k, v)| (format!("{RUN_PREFIX}{k}"), v.clone())).collect();
    kv.extend(settings.iter().map(|(k, v)| (k.clone(), v.clone())));
    write_atomic(path, kv_text(&kv).as_bytes())?;
    Ok(())
}

/// Wall-clock sidecar, kept apart from reports so those stay reproducible.
pub fn write_timing(path: &Path, started: f64, extra: &BTreeMap<String, f64>) -> Result<(), CliError> {
    let finished = unix_now();
    let mut kv = BTreeMap::new();
    kv.insert("started_unix".to_string(), format!("{started:.3}"));
    kv.insert("finished_unix".to_string(), format!("{finished:.3}"));
    kv.insert("elapsed_s".to_string(), format!("{:.3}", finished - started));
    for (k, v) in extra {
        kv.insert(k.clone(), format!("{v:.6}"));
    }
    write_atomic(path, kv_text(&kv).as_bytes())?;
    Ok(())
}
