//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use spectral_forge::classical::{ParamCell, PeakDetectorConfig};
use spectral_forge::experiments::{
    self as ex, emit_report, partition, to_flat_kv, ClassicalProtocol, ContrastiveProtocol, DatasetSummary, ExperimentConfig, ExperimentReport,
    FoldMetrics, FreezeProtocol, ReportFormat, SganProtocol, ShiftProtocol, SupervisedProtocol, TransferProtocol,
};
use spectral_forge::fsutil::write_atomic;
use spectral_forge::ingest::{load_corpus, load_corpus_lenient, persist_split, KindFilter, RawCorpus, SplitManifest, SplitRecord};
use spectral_forge::models::{gradcam, gradcam_export_text};
use spectral_forge::nn::{load_checkpoint, save_checkpoint, Sequential, Tensor};
use spectral_forge::preprocess::{build_dataset, PreprocessConfig, SpectralDataset};

use crate::args::{Command, Detector, ExperimentArgs, Format, Kind};
use crate::settings::{collect_kv, resolve, unix_now, write_run_config, write_timing, PROTOCOL_PREFIX, RUN_CONFIG_FILE, TIMING_FILE};
use crate::CliError;

pub fn run(cmd: &Command, seed: Option<u64>, jobs: usize) -> Result<(), CliError> {
    let started = unix_now();
    match cmd {
        Command::Ingest {
            input,
            kind,
            out,
            lenient,
            folds,
        } => ingest(input, *kind, out, *lenient, *folds, seed.unwrap_or(0), started),
        Command::Preprocess {
            input,
            kind,
            out,
            lenient,
            n_min,
            sets,
        } => preprocess(input, *kind, out, *lenient, *n_min, sets, seed, started),
        Command::Baseline {
            exp,
            detector,
            knn_k,
            svm_c,
            svm_gamma,
        } => experiment::<ClassicalProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(d) = detector {
                p.detector = detector_config(*d);
            }
            if !knn_k.is_empty() || !svm_c.is_empty() || !svm_gamma.is_empty() {
                p.grid = knn_k.iter().map(|&k| ParamCell::Knn { k }).collect();
                let cs = if svm_c.is_empty() && !svm_gamma.is_empty() { vec![10.0] } else { svm_c.clone() };
                let gs = if svm_gamma.is_empty() && !svm_c.is_empty() { vec![0.01] } else { svm_gamma.clone() };
                for &c in &cs {
                    for &gamma in &gs {
                        p.grid.push(ParamCell::Svm { c, gamma });
                    }
                }
            }
            Ok(ex::run_classical(ds, p, cfg)?)
        }),
        Command::Train { exp, model, checkpoint } => experiment::<SupervisedProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(m) = model {
                p.model = m.parse().map_err(CliError::Usage)?;
            }
            let report = ex::run_supervised(ds, p.model, cfg)?;
            if let Some(path) = checkpoint {
                let (net, _) = ex::fit_final(ds, p.model, cfg)?;
                let meta = serde_json::json!({
                    "model": p.model,
                    "class_names": ds.class_names,
                    "grid_start": ds.grid_start,
                    "grid_step": ds.grid_step,
                    "seed": cfg.seed,
                });
                save_checkpoint(&net, meta, path)?;
            }
            Ok(report)
        }),
        Command::Eval {
            exp,
            checkpoint,
            test_only,
        } => experiment::<EvalProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            p.test_only = *test_only;
            eval(ds, checkpoint, cfg, p)
        }),
        Command::ShiftRobustness { exp, m, n, shifts } => experiment::<ShiftProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if !m.is_empty() || !n.is_empty() {
                let ms = if m.is_empty() { vec![2] } else { m.clone() };
                let ns = if n.is_empty() { vec![3] } else { n.clone() };
                p.variants = ms.iter().flat_map(|&a| ns.iter().map(move |&b| (a, b))).collect();
            }
            if !shifts.is_empty() {
                p.shifts = shifts.clone();
            }
            Ok(ex::run_shift_robustness(ds, p, cfg)?)
        }),
        Command::Sgan { exp, labeled } => experiment::<SganProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(l) = labeled {
                p.labeled_fraction = *l;
            }
            Ok(ex::run_sgan(ds, p, cfg)?)
        }),
        Command::Contrastive { exp, labeled } => experiment::<ContrastiveProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(l) = labeled {
                p.labeled_fraction = *l;
            }
            Ok(ex::run_contrastive(ds, p, cfg)?)
        }),
        Command::FreezeLayers { exp, sizes } => experiment::<FreezeProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if !sizes.is_empty() {
                p.subset_sizes = sizes.clone();
            }
            Ok(ex::run_layer_freezing(ds, p, cfg)?)
        }),
        Command::Autoencoder { exp, labeled } => experiment::<ex::AutoencoderProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(l) = labeled {
                p.labeled_fraction = *l;
            }
            Ok(ex::run_autoencoder_features(ds, p, cfg)?)
        }),
        Command::Transfer { exp, c } => experiment::<TransferProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if !c.is_empty() {
                p.held_out = c.clone();
            }
            Ok(ex::run_transfer(ds, p, cfg)?)
        }),
        Command::Distances { exp, detector } => experiment::<ClassicalProtocol>(cmd, exp, seed, jobs, started, |ds, cfg, p| {
            if let Some(d) = detector {
                p.detector = detector_config(*d);
            }
            Ok(ex::run_distances(ds, p, cfg)?)
        }),
        Command::Gradcam {
            checkpoint,
            dataset,
            row,
            class,
            out,
        } => gradcam_cmd(checkpoint, dataset, *row, *class, out, started),
    }
}

fn detector_config(d: Detector) -> PeakDetectorConfig {
    match d {
        Detector::Cwt => PeakDetectorConfig::default(),
        Detector::Local => PeakDetectorConfig::local_maxima(),
    }
}

fn kind_filter(k: Kind) -> KindFilter {
    match k {
        Kind::Raw => KindFilter::Raw,
        Kind::Processed => KindFilter::Processed,
        Kind::Any => KindFilter::Any,
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Raw => "raw",
        Kind::Processed => "processed",
        Kind::Any => "any",
    }
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Json => ReportFormat::Json,
        Format::Table => ReportFormat::Table,
        Format::Csv => ReportFormat::Csv,
    }
}

fn load_dataset(path: &Path) -> Result<SpectralDataset, CliError> {
    Ok(SpectralDataset::load(path)?)
}

fn read_corpus(input: &Path, kind: Kind, lenient: bool) -> Result<(RawCorpus, usize), CliError> {
    // Absolute paths keep split manifests valid wherever they are written.
    let root = input
        .canonicalize()
        .map_err(|e| CliError::Domain(format!("{}: {e}", input.display())))?;
    if lenient {
        let (c, failures) = load_corpus_lenient(&root, kind_filter(kind))?;
        Ok((c, failures.len()))
    } else {
        Ok((load_corpus(&root, kind_filter(kind))?, 0))
    }
}

/// Shared driver: resolve settings, load the dataset, run, then write the
/// report, the run config and the timing sidecar into `--out`.
fn experiment<P: Serialize + DeserializeOwned + Default>(
    cmd: &Command,
    a: &ExperimentArgs,
    seed: Option<u64>,
    jobs: usize,
    started: f64,
    body: impl FnOnce(&SpectralDataset, &ExperimentConfig, &mut P) -> Result<ExperimentReport, CliError>,
) -> Result<(), CliError> {
    let (cfg, mut proto) = resolve::<P>(a, seed, jobs)?;
    let ds = load_dataset(&a.dataset)?;
    log::info!("{}: {} rows, {} classes", a.dataset.display(), ds.len(), ds.num_classes());
    let report = body(&ds, &cfg, &mut proto)?;
    std::fs::create_dir_all(&a.out)?;
    let formats: Vec<ReportFormat> = a.formats.iter().map(|&f| report_format(f)).collect();
    let stem = cmd.name().replace('-', "_");
    emit_report(&report, &a.out, &stem, &formats)?;
    let mut settings = to_flat_kv(&cfg);
    for (k, v) in to_flat_kv(&proto) {
        settings.insert(format!("{PROTOCOL_PREFIX}{k}"), v);
    }
    let run = [("command", cmd.name().to_string()), ("dataset", a.dataset.display().to_string())];
    write_run_config(&a.out.join(RUN_CONFIG_FILE), &run, &settings)?;
    write_timing(&a.out.join(TIMING_FILE), started, &report.timing)?;
    print!("{}", report.to_table());
    Ok(())
}

fn ingest(input: &Path, kind: Kind, out: &Path, lenient: bool, folds: usize, seed: u64, started: f64) -> Result<(), CliError> {
    if folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    let (corpus, failed) = read_corpus(input, kind, lenient)?;
    let mut names: Vec<&str> = corpus.spectra.iter().map(|s| s.mineral_name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let labels: Vec<usize> = corpus
        .spectra
        .iter()
        .map(|s| names.binary_search(&s.mineral_name.as_str()).unwrap())
        .collect();
    let plan = ex::stratified_kfold(&labels, folds, seed);
    std::fs::create_dir_all(out)?;
    let mut listing = String::from("# source_path\tmineral\trruff_id\tkind\tpoints\n");
    for s in &corpus.spectra {
        let _ = writeln!(listing, "{}\t{}\t{}\t{:?}\t{}", s.source_path, s.mineral_name, s.rruff_id, s.kind, s.points.len());
    }
    write_atomic(&out.join("corpus.tsv"), listing.as_bytes())?;
    let manifest = SplitManifest {
        dataset_id: format!("rruff-{}-{}", kind_name(kind), &corpus.manifest_hash[..12]),
        k: folds,
        records: corpus
            .spectra
            .iter()
            .zip(&plan.assignments)
            .map(|(s, &fold)| SplitRecord {
                source_path: s.source_path.clone(),
                label: s.mineral_name.clone(),
                fold,
            })
            .collect(),
    };
    persist_split(&manifest, &out.join("split.tsv"))?;
    let run = [
        ("command", "ingest".to_string()),
        ("in", input.display().to_string()),
        ("kind", kind_name(kind).to_string()),
        ("lenient", lenient.to_string()),
        ("folds", folds.to_string()),
    ];
    let settings = BTreeMap::from([("seed".to_string(), seed.to_string())]);
    write_run_config(&out.join(RUN_CONFIG_FILE), &run, &settings)?;
    write_timing(&out.join(TIMING_FILE), started, &BTreeMap::new())?;
    println!("{} spectra, {} minerals, {} skipped; manifest {}", corpus.len(), names.len(), failed, corpus.manifest_hash);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn preprocess(input: &Path, kind: Kind, out: &Path, lenient: bool, n_min: Option<usize>, sets: &[String], seed: Option<u64>, started: f64) -> Result<(), CliError> {
    let mut cfg = PreprocessConfig::default();
    cfg.apply_kv(&collect_kv(None, sets)?).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(n) = n_min {
        cfg.n_min = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (corpus, failed) = read_corpus(input, kind, lenient)?;
    let (ds, dropped) = build_dataset(&corpus, &cfg)?;
    for d in &dropped {
        log::warn!("dropped {}: {}", d.source_path, d.reason);
    }
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ds.save(out)?;
    let mut text = format!(
        "run.command=preprocess\nrun.in={}\nrun.kind={}\nrun.lenient={lenient}\n",
        input.display(),
        kind_name(kind)
    );
    text.push_str(&cfg.to_kv());
    let cfg_path = out.with_file_name(format!("{}.{RUN_CONFIG_FILE}", file_name(out)));
    write_atomic(&cfg_path, text.as_bytes())?;
    write_timing(&out.with_file_name(format!("{}.{TIMING_FILE}", file_name(out))), started, &BTreeMap::new())?;
    println!(
        "{} rows, {} classes, {} dropped, {} unparseable -> {}",
        ds.len(),
        ds.num_classes(),
        dropped.len(),
        failed,
        out.display()
    );
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, Default, Serialize, serde::Deserialize)]
struct EvalProtocol {
    test_only: bool,
}

fn checkpoint_classes(meta: &serde_json::Value) -> Result<Vec<String>, CliError> {
    serde_json::from_value(meta["class_names"].clone()).map_err(|_| CliError::Domain("checkpoint lacks class names".into()))
}

fn eval(ds: &SpectralDataset, path: &Path, cfg: &ExperimentConfig, p: &EvalProtocol) -> Result<ExperimentReport, CliError> {
    let (net, meta) = load_checkpoint(path)?;
    let classes = checkpoint_classes(&meta)?;
    let remap: Vec<usize> = ds
        .class_names
        .iter()
        .map(|n| {
            classes
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| CliError::Domain(format!("class `{n}` unknown to the checkpoint")))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<usize> = if p.test_only { partition(&ds.labels, cfg).test } else { (0..ds.len()).collect() };
    let x = ex::dataset_tensor(ds);
    let probs = ex::predict_proba(&net, &x, &rows, cfg.eval_batch)?;
    let truth: Vec<usize> = rows.iter().map(|&i| remap[ds.labels[i]]).collect();
    let mut config = to_flat_kv(cfg);
    config.insert(format!("{PROTOCOL_PREFIX}test_only"), p.test_only.to_string());
    let mut report = ExperimentReport::new("eval", cfg.seed, DatasetSummary::of(ds), config);
    report.folds.push(FoldMetrics {
        fold: 0,
        split: if p.test_only { "test" } else { "all" }.into(),
        top1: ex::topk_accuracy(&probs, &truth, 1),
        top3: Some(ex::topk_accuracy(&probs, &truth, 3)),
        confidence_gap: Some(ex::confidence_gap(&probs)),
        train_size: 0,
        eval_size: rows.len(),
        loss_curve: Vec::new(),
    });
    report.extras.insert("checkpoint_meta".into(), meta);
    report.finalize();
    Ok(report)
}

fn predicted_class(net: &Sequential, x: &[f64]) -> Result<usize, CliError> {
    let t = Tensor::new(vec![1, 1, x.len()], x.to_vec())?;
    let p = net.infer(&t, None, 1)?;
    Ok(ex::ranked_classes(p.row(0))[0])
}

fn gradcam_cmd(checkpoint: &Path, dataset: &Path, row: usize, class: Option<usize>, out: &Path, started: f64) -> Result<(), CliError> {
    let (net, meta) = load_checkpoint(checkpoint)?;
    let ds = load_dataset(dataset)?;
    if row >= ds.len() {
        return Err(CliError::Usage(format!("--row {row} out of range ({} rows)", ds.len())));
    }
    let x = ds.row_f64(row);
    let target = match class {
        Some(c) => c,
        None => predicted_class(&net, &x)?,
    };
    let curve = gradcam(&net, &x, target)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("gradcam_row{row}.tsv"));
    write_atomic(&path, gradcam_export_text(&ds.grid(), &curve).as_bytes())?;
    let classes = checkpoint_classes(&meta).unwrap_or_default();
    let run = [
        ("command", "gradcam".to_string()),
        ("checkpoint", checkpoint.display().to_string()),
        ("dataset", dataset.display().to_string()),
        ("row", row.to_string()),
        ("class", target.to_string()),
    ];
    write_run_config(&out.join(RUN_CONFIG_FILE), &run, &BTreeMap::new())?;
    write_timing(&out.join(TIMING_FILE), started, &BTreeMap::new())?;
    println!(
        "row {row} ({}), class {target} ({}) -> {}",
        ds.class_names[ds.labels[row]],
        classes.get(target).map_or("?", String::as_str),
        path.display()
    );
    Ok(())
}
