//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion that ran did not pass.
//!
//! Criteria 8 to 16 need preprocessed RRUFF datasets, given as paths in
//! `SPECTRAL_FORGE_RRUFF_RAW` and `SPECTRAL_FORGE_RRUFF_CLEAN`. An optional
//! `SPECTRAL_FORGE_ACCEPT_EPOCHS` caps training epochs for those runs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_forge::classical::{
    detect_peaks_cwt, featurize, knn_classify, squared_euclidean, KnnConfig, PeakDetectorConfig,
};
use spectral_forge::experiments::synthetic::peak_dataset;
use spectral_forge::experiments::{
    head_inference_cost, run_autoencoder_features, run_classical, run_contrastive, run_distances, run_layer_freezing,
    run_sgan, run_shift_robustness, run_supervised, run_transfer, AutoencoderProtocol, ClassicalProtocol,
    ContrastiveProtocol, ExperimentConfig, ExperimentReport, FreezeProtocol, ModelKind, SganProtocol, ShiftProtocol,
    TransferProtocol,
};
use spectral_forge::ingest::{load_split, persist_split, Spectrum, SpectrumKind, SplitManifest, SplitRecord};
use spectral_forge::models::{build_cnn, CnnConfig};
use spectral_forge::nn::gradcheck::op_suite;
use spectral_forge::nn::kernels::{conv1d_forward, maxpool1d_forward};
use spectral_forge::nn::Tensor;
use spectral_forge::preprocess::{build_dataset, normalize, resample, NormMode, PreprocessConfig, SpectralDataset};
use spectral_forge::ingest::RawCorpus;

type Outcome = Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    NotRun(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn gradients() -> Outcome {
    let mut worst = (0.0f64, "");
    for seed in 0..3 {
        for variant in 0..3 {
            for (op, err) in op_suite(seed, variant).map_err(|e| e.to_string())? {
                if err > worst.0 || !err.is_finite() {
                    worst = (err, op);
                }
            }
        }
    }
    check(worst.0 <= 1e-3, format!("max relative error {:.2e} ({})", worst.0, worst.1))
}

fn conv_pool_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (b, cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..5));
        let len = rng.gen_range(1..40);
        let k = 2 * rng.gen_range(0..5) + 1;
        let x = rand_tensor(&[b, cin, len], &mut rng);
        let w = rand_tensor(&[cout, cin, k], &mut rng);
        let bias = rand_tensor(&[cout], &mut rng);
        let got = conv1d_forward(&x, &w, Some(&bias)).map_err(|e| e.to_string())?;
        let pad = (k - 1) / 2;
        let (xd, wd) = (x.data(), w.data());
        for bi in 0..b {
            for co in 0..cout {
                for t in 0..len {
                    let mut acc = bias.data()[co];
                    for ci in 0..cin {
                        for kk in 0..k {
                            let src = t as i64 + kk as i64 - pad as i64;
                            if src >= 0 && (src as usize) < len {
                                acc += wd[(co * cin + ci) * k + kk] * xd[(bi * cin + ci) * len + src as usize];
                            }
                        }
                    }
                    worst = worst.max((acc - got.data()[(bi * cout + co) * len + t]).abs());
                }
            }
        }
        let m = rng.gen_range(1..6);
        let (pooled, _) = maxpool1d_forward(&x, m).map_err(|e| e.to_string())?;
        let lo = len.div_ceil(m);
        for r in 0..b * cin {
            for j in 0..lo {
                let mut best = f64::NEG_INFINITY;
                for t in j * m..((j + 1) * m).min(len) {
                    best = best.max(xd[r * len + t]);
                }
                worst = worst.max((best - pooled.data()[r * lo + j]).abs());
            }
        }
    }
    check(worst <= 1e-6, format!("50 cases, max abs deviation {worst:.1e}"))
}

fn impulse(len: usize, at: usize) -> Tensor {
    let mut t = Tensor::zeros(&[1, 1, len]);
    t.data_mut()[at] = 1.0;
    t
}

fn equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let len = 64;
    let w = rand_tensor(&[3, 1, 7], &mut rng);
    let mut cases = 0;
    for p in 8..40 {
        for s in 1..12 {
            let a = conv1d_forward(&impulse(len, p), &w, None).map_err(|e| e.to_string())?;
            let b = conv1d_forward(&impulse(len, p + s), &w, None).map_err(|e| e.to_string())?;
            for c in 0..3 {
                for t in 0..len - s {
                    if a.data()[c * len + t] != b.data()[c * len + t + s] {
                        return Err(format!("conv not equivariant at p={p} s={s}"));
                    }
                }
            }
            cases += 1;
        }
    }
    for m in [2, 4, 8] {
        for p in 0..len {
            let base = maxpool1d_forward(&impulse(len, p - p % m), m).map_err(|e| e.to_string())?.0;
            let moved = maxpool1d_forward(&impulse(len, p), m).map_err(|e| e.to_string())?.0;
            if base.data() != moved.data() {
                return Err(format!("pool not invariant within window (m={m}, p={p})"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} impulse cases exact"))
}

fn spectrum(points: Vec<(f64, f64)>, id: &str) -> Spectrum {
    Spectrum {
        mineral_name: "Quartz".into(),
        rruff_id: id.into(),
        kind: SpectrumKind::Raw,
        points,
        source_path: format!("Quartz__{id}__Raman__Raman_Data_RAW.txt"),
        metadata: BTreeMap::new(),
    }
}

fn preprocessing() -> Outcome {
    let cfg = PreprocessConfig::default();
    if cfg.full_grid_len() != 1401 {
        return Err(format!("full grid has {} points", cfg.full_grid_len()));
    }
    let line = |x: f64| 3.0 + 0.25 * x;
    let wide = spectrum((0..=1000).map(|i| 150.0 + 1.55 * i as f64).map(|x| (x, line(x))).collect(), "R1");
    let row = resample(&wide, &cfg).map_err(|e| e.to_string())?;
    if row.len() != 1392 {
        return Err(format!("resampled length {}", row.len()));
    }
    if row.iter().enumerate().any(|(i, &v)| (v - line(200.0 + i as f64)).abs() > 1e-9) {
        return Err("interpolation off a straight line".into());
    }
    let narrow = spectrum((0..=140).map(|i| 300.0 + 5.0 * i as f64).map(|x| (x, 1.0 + x)).collect(), "R2");
    let row = resample(&narrow, &cfg).map_err(|e| e.to_string())?;
    for (i, &v) in row.iter().enumerate() {
        let x = 200.0 + i as f64;
        if (x < 300.0 || x > 1000.0) && v != 0.0 {
            return Err(format!("nonzero outside range at {x}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let r: Vec<f64> = (0..1392).map(|_| rng.gen_range(-50.0..900.0)).collect();
        let n = normalize(&r, NormMode::MinMax).map_err(|e| e.to_string())?;
        let (lo, hi) = n.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if lo != 0.0 || hi != 1.0 {
            return Err(format!("MIN_MAX range [{lo}, {hi}]"));
        }
    }
    let corpus = RawCorpus::from_spectra(vec![wide.clone(), narrow.clone()]).map_err(|e| e.to_string())?;
    let pc = PreprocessConfig { n_min: 1, ..cfg };
    let a = build_dataset(&corpus, &pc).map_err(|e| e.to_string())?.0.to_bytes();
    let b = build_dataset(&corpus, &pc).map_err(|e| e.to_string())?.0.to_bytes();
    if a != b {
        return Err("dataset build not deterministic".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    for i in 0..10 {
        let name = format!("M{}__R{i}__Raman__Raman_Data_RAW.txt", i % 3);
        std::fs::write(dir.path().join(&name), "x").map_err(|e| e.to_string())?;
        records.push(SplitRecord { source_path: name, label: format!("M{}", i % 3), fold: i % 5 });
    }
    let manifest = SplitManifest { dataset_id: "acc".into(), k: 5, records };
    let path = dir.path().join("split.tsv");
    persist_split(&manifest, &path).map_err(|e| e.to_string())?;
    let back = load_split(&path).map_err(|e| e.to_string())?;
    check(back == manifest, "1401→1392, zero-fill, MIN_MAX bounds, split round-trip exact".into())
}

fn features() -> Outcome {
    let v = featurize(&[0, 11, 12, 1391], 1392, 12).map_err(|e| e.to_string())?;
    let hist = v.to_f64();
    if hist.len() != 116 || hist[0] != 2.0 || hist[1] != 1.0 || hist[115] != 1.0 {
        return Err(format!("histogram of {} bins", hist.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let det = PeakDetectorConfig::default();
    for _ in 0..20 {
        let centers: Vec<f64> = (0..4).map(|_| rng.gen_range(50.0..1340.0)).collect();
        let row: Vec<f64> = (0..1392)
            .map(|t| centers.iter().map(|&c| (-((t as f64 - c) / 12.0f64).powi(2)).exp()).sum::<f64>() + 0.01 * ((t as f64) * 0.37).sin())
            .collect();
        let base = detect_peaks_cwt(&row, &det);
        for alpha in [0.5, 3.0, 1000.0] {
            let scaled: Vec<f64> = row.iter().map(|v| v * alpha).collect();
            if detect_peaks_cwt(&scaled, &det) != base {
                return Err(format!("peaks moved under scaling by {alpha}"));
            }
        }
    }
    let train: Vec<Vec<f64>> = (0..60).map(|_| (0..8).map(|_| rng.gen_range(0.0..5.0)).collect()).collect();
    let labels: Vec<usize> = (0..60).map(|i| i % 7).collect();
    for _ in 0..200 {
        let q: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..5.0)).collect();
        let nearest = (0..60)
            .min_by(|&a, &b| squared_euclidean(&train[a], &q).partial_cmp(&squared_euclidean(&train[b], &q)).unwrap())
            .unwrap();
        if knn_classify(&train, &labels, &q, KnnConfig { k: 1 }).map_err(|e| e.to_string())? != labels[nearest] {
            return Err("k=1 disagrees with the nearest neighbour".into());
        }
    }
    Ok("116 bins, CWT peaks scale-invariant, k=1 matches nearest neighbour".into())
}

fn small_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.cnn = CnnConfig {
        conv_channels: vec![4, 8, 8],
        kernel_sizes: vec![5, 3],
        dense_width: 16,
        ..Default::default()
    };
    cfg.schedule.max_epochs = 3;
    cfg.schedule.batch_size = 8;
    cfg.jobs = spectral_forge::par::default_jobs();
    cfg
}

fn label_guard() -> Outcome {
    let ds = peak_dataset(4, 12, 128, 6);
    let cfg = small_cfg();
    let reads = |r: &ExperimentReport| r.extras["unlabeled_label_reads"].as_u64();
    let sgan = SganProtocol { labeled_fraction: 0.25, latent_dim: 8, generator_channels: 8, generator_stages: 2 };
    let con = ContrastiveProtocol { labeled_fraction: 0.25, projection_hidden: 16, projection_dim: 8, triple_samples: 8, ..Default::default() };
    let ae = AutoencoderProtocol { labeled_fraction: 0.25, hidden: 32, latent_dim: 8, ..Default::default() };
    let counts = [
        reads(&run_sgan(&ds, &sgan, &cfg).map_err(|e| e.to_string())?),
        reads(&run_contrastive(&ds, &con, &cfg).map_err(|e| e.to_string())?),
        reads(&run_autoencoder_features(&ds, &ae, &cfg).map_err(|e| e.to_string())?),
    ];
    check(counts.iter().all(|c| *c == Some(0)), format!("unlabeled reads sgan/contrastive/autoencoder = {counts:?}"))
}

fn transfer_contract() -> Outcome {
    let ds = peak_dataset(8, 8, 128, 7);
    let proto = TransferProtocol { held_out: vec![2, 3, 4], finetune_max_epochs: 4, ..Default::default() };
    let r = run_transfer(&ds, &proto, &small_cfg()).map_err(|e| e.to_string())?;
    if (2..=4).any(|c| r.extras[format!("c={c}").as_str()]["backbone_checksum"].as_str().is_none()) {
        return Err("missing backbone checksum".into());
    }
    let backbone = build_cnn(&CnnConfig { num_classes: 10, ..Default::default() }, 0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&[16, 1, 1392], &mut rng);
    let (t5, t20) = head_inference_cost(&backbone, 5, 20, &x, 7).map_err(|e| e.to_string())?;
    let ratio = t20 / t5;
    check(ratio < 1.05, format!("backbone unchanged after fine-tuning; cost ratio c=20/c=5 = {ratio:.3}"))
}

struct Rruff {
    raw: SpectralDataset,
    clean: SpectralDataset,
    cfg: ExperimentConfig,
}

fn load_env(var: &str) -> Option<Result<SpectralDataset, String>> {
    let path = PathBuf::from(std::env::var_os(var)?);
    Some(SpectralDataset::load(&path).map_err(|e| format!("{var}: {e}")))
}

fn rruff() -> Result<Option<Rruff>, String> {
    let (Some(raw), Some(clean)) = (load_env("SPECTRAL_FORGE_RRUFF_RAW"), load_env("SPECTRAL_FORGE_RRUFF_CLEAN")) else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig { jobs: spectral_forge::par::default_jobs(), ..Default::default() };
    if let Ok(e) = std::env::var("SPECTRAL_FORGE_ACCEPT_EPOCHS") {
        cfg.schedule.max_epochs = e.parse().map_err(|_| format!("bad SPECTRAL_FORGE_ACCEPT_EPOCHS `{e}`"))?;
    }
    Ok(Some(Rruff { raw: raw?, clean: clean?, cfg }))
}

fn metric(r: &ExperimentReport, row: &str, col: &str, key: &str) -> Result<f64, String> {
    r.cell(row, col)
        .and_then(|c| c.metrics.get(key).copied())
        .ok_or_else(|| format!("report lacks {row}/{col}/{key}"))
}

fn near(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol + 1e-12
}

/// Runs shared by several of the dataset criteria, computed lazily.
#[derive(Default)]
struct Cache {
    classical: BTreeMap<&'static str, ExperimentReport>,
    supervised: BTreeMap<(&'static str, &'static str), ExperimentReport>,
}

impl Cache {
    fn classical(&mut self, d: &Rruff, which: &'static str) -> Result<&ExperimentReport, String> {
        if !self.classical.contains_key(which) {
            let (ds, det) = match which {
                "raw" => (&d.raw, PeakDetectorConfig::default()),
                "clean" => (&d.clean, PeakDetectorConfig::default()),
                _ => (&d.clean, PeakDetectorConfig::local_maxima()),
            };
            let proto = ClassicalProtocol { detector: det, ..Default::default() };
            self.classical.insert(which, run_classical(ds, &proto, &d.cfg).map_err(|e| e.to_string())?);
        }
        Ok(&self.classical[which])
    }

    fn supervised(&mut self, d: &Rruff, which: &'static str, kind: &'static str) -> Result<&ExperimentReport, String> {
        if !self.supervised.contains_key(&(which, kind)) {
            let ds = if which == "raw" { &d.raw } else { &d.clean };
            let model: ModelKind = kind.parse().map_err(|_| format!("model {kind}"))?;
            self.supervised.insert((which, kind), run_supervised(ds, model, &d.cfg).map_err(|e| e.to_string())?);
        }
        Ok(&self.supervised[&(which, kind)])
    }
}

const KNN: &str = "knn_k1";
const SVM: &str = "svm_c10_g0.01";

fn c8(d: &Rruff, c: &mut Cache) -> Outcome {
    let (kc, sc) = (metric(c.classical(d, "clean")?, KNN, "cv", "top1")?, metric(c.classical(d, "clean")?, SVM, "cv", "top1")?);
    let (kr, sr) = (metric(c.classical(d, "raw")?, KNN, "cv", "top1")?, metric(c.classical(d, "raw")?, SVM, "cv", "top1")?);
    let ok = near(kc, 0.70, 0.05) && near(sc, 0.72, 0.05) && kc - kr >= 0.15 && sc - sr >= 0.15;
    check(ok, format!("KNN clean {kc:.3} raw {kr:.3}; SVM clean {sc:.3} raw {sr:.3}"))
}

fn c9(d: &Rruff, c: &mut Cache) -> Outcome {
    let cwt = metric(c.classical(d, "clean")?, KNN, "cv", "top1")?;
    let local = metric(c.classical(d, "local")?, KNN, "cv", "top1")?;
    check(cwt - local >= 0.05, format!("KNN CWT {cwt:.3} vs local maxima {local:.3}"))
}

fn cv_top1(r: &ExperimentReport) -> Result<f64, String> {
    r.aggregate("cv").map(|a| a.top1_mean).ok_or_else(|| "no cv aggregate".into())
}

fn c10(d: &Rruff, c: &mut Cache) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    let mut cnn = BTreeMap::new();
    for which in ["clean", "raw"] {
        let a = cv_top1(c.supervised(d, which, "cnn")?)?;
        let b = cv_top1(c.supervised(d, which, "cnn_knn")?)?;
        let m = cv_top1(c.supervised(d, which, "mlp_m")?)?;
        let k = metric(c.classical(d, which)?, KNN, "cv", "top1")?;
        ok &= a > b && b >= m && m >= k && a > k;
        cnn.insert(which, a);
        detail.push(format!("{which}: CNN {a:.3} CNN+KNN {b:.3} MLP-M {m:.3} KNN {k:.3}"));
    }
    ok &= cnn["raw"] >= cnn["clean"] - 0.02;
    check(ok, detail.join("; "))
}

fn c11(d: &Rruff) -> Outcome {
    let r = run_shift_robustness(&d.clean, &ShiftProtocol::default(), &d.cfg).map_err(|e| e.to_string())?;
    let g = |m: usize, n: usize, s: &str, k: &str| metric(&r, &format!("m={m},n={n}"), &format!("shift={s}"), k);
    let (p2_30, p64_30) = (g(2, 3, "30", "top3")?, g(64, 3, "30", "top3")?);
    let (n10, n1) = (g(2, 10, "30", "top3")?, g(2, 1, "30", "top3")?);
    let (t2, t64) = (g(2, 3, "0", "top1")?, g(64, 3, "0", "top1")?);
    let p2_0 = g(2, 3, "0", "top3")?;
    let trends = p64_30 - p2_30 >= 0.20 && n10 - n1 >= 0.20 && t2 - t64 >= 0.10;
    let cells = near(p2_0, 0.91, 0.10) && near(p2_30, 0.16, 0.10) && near(p64_30, 0.57, 0.10) && near(t2, 0.83, 0.10) && near(t64, 0.62, 0.10);
    check(
        trends && cells,
        format!("top3@30 m=2 {p2_30:.3} m=64 {p64_30:.3}; n=10 {n10:.3} n=1 {n1:.3}; top1@0 m=2 {t2:.3} m=64 {t64:.3}; top3@0 m=2 {p2_0:.3}"),
    )
}

fn semisup_gap(r: &ExperimentReport, kind: &str) -> Result<f64, String> {
    let find = |col: &str| r.cells.iter().find(|c| c.column == col).and_then(|c| c.metrics.get("top1").copied());
    match (find(kind), find("supervised")) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => Err(format!("{kind} report lacks cells")),
    }
}

fn c12(d: &Rruff) -> Outcome {
    let mut gaps = Vec::new();
    for p in [0.10, 0.50] {
        let sg = run_sgan(&d.clean, &SganProtocol { labeled_fraction: p, ..Default::default() }, &d.cfg).map_err(|e| e.to_string())?;
        let co = run_contrastive(&d.clean, &ContrastiveProtocol { labeled_fraction: p, ..Default::default() }, &d.cfg).map_err(|e| e.to_string())?;
        gaps.push((semisup_gap(&sg, "sgan")?, semisup_gap(&co, "contrastive")?));
    }
    let ok = gaps[0].0 >= 0.05 && gaps[0].1 >= 0.05 && gaps[1].0.abs() <= 0.03 && gaps[1].1.abs() <= 0.03;
    check(ok, format!("gain over supervised at p=0.10 {:+.3}/{:+.3}, at p=0.50 {:+.3}/{:+.3} (sgan/contrastive)", gaps[0].0, gaps[0].1, gaps[1].0, gaps[1].1))
}

fn c13(d: &Rruff) -> Outcome {
    let r = run_layer_freezing(&d.clean, &FreezeProtocol::default(), &d.cfg).map_err(|e| e.to_string())?;
    let a = |row: &str| metric(&r, row, "test", "top1");
    let (s80, s200, s848, full) = (a("pretrain=80")?, a("pretrain=200")?, a("pretrain=848")?, a("end_to_end")?);
    check(s80 < s200 && s200 <= s848 && near(s848, full, 0.05), format!("80: {s80:.3} 200: {s200:.3} 848: {s848:.3} end-to-end: {full:.3}"))
}

fn c14(d: &Rruff) -> Outcome {
    let r = run_transfer(&d.clean, &TransferProtocol::default(), &d.cfg).map_err(|e| e.to_string())?;
    let acc: Vec<f64> = [5, 10, 15, 20].iter().map(|c| metric(&r, &format!("c={c}"), "finetune", "top1")).collect::<Result<_, _>>()?;
    let ok = acc.windows(2).all(|w| w[1] < w[0]) && acc[0] >= 0.80 && acc[3] <= 0.55;
    check(ok, format!("fine-tune top-1 for c=5,10,15,20: {acc:.3?}"))
}

fn c15(d: &Rruff, c: &mut Cache) -> Outcome {
    let gap = |r: &ExperimentReport| r.aggregate("test").and_then(|a| a.confidence_gap_mean).ok_or_else(|| "no confidence gap".to_string());
    let clean = gap(c.supervised(d, "clean", "cnn")?)?;
    let raw = gap(c.supervised(d, "raw", "cnn")?)?;
    let inside = |g: f64| (0.30..=0.60).contains(&g);
    check(inside(clean) && inside(raw) && raw >= clean, format!("mean gap clean {clean:.3} raw {raw:.3}"))
}

fn c16(d: &Rruff) -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (ds, name, intra_t, inter_t) in [(&d.clean, "clean", 2.2, 6.1), (&d.raw, "raw", 6.5, 13.1)] {
        let r = run_distances(ds, &ClassicalProtocol::default(), &d.cfg).map_err(|e| e.to_string())?;
        let (intra, inter) = (metric(&r, "peak_features", "distance", "intra")?, metric(&r, "peak_features", "distance", "inter")?);
        ok &= near(intra, intra_t, 0.2 * intra_t) && near(inter, inter_t, 0.2 * inter_t);
        detail.push(format!("{name} ({intra:.2}, {inter:.2})"));
    }
    check(ok, detail.join("; "))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Status)> = Vec::new();
    let props: [(&str, fn() -> Outcome); 7] = [
        ("gradient correctness", gradients),
        ("conv/pool oracles", conv_pool_oracles),
        ("equivariance/invariance", equivariance),
        ("preprocessing contracts", preprocessing),
        ("feature pipeline", features),
        ("label-leak guard", label_guard),
        ("transfer freeze contract", transfer_contract),
    ];
    for (i, (name, f)) in props.into_iter().enumerate() {
        let status = match f() {
            Ok(d) => Status::Pass(d),
            Err(d) => Status::Fail(d),
        };
        report_line(i + 1, name, &status);
        results.push((i + 1, name, status));
    }

    type DataCheck = Box<dyn Fn(&Rruff, &mut Cache) -> Outcome>;
    let data: Vec<(&str, DataCheck)> = vec![
        ("classical baselines", Box::new(c8)),
        ("detector ordering", Box::new(c9)),
        ("model ordering", Box::new(c10)),
        ("shift robustness trends", Box::new(|d, _| c11(d))),
        ("semi-supervised gains", Box::new(|d, _| c12(d))),
        ("layer freezing", Box::new(|d, _| c13(d))),
        ("transfer", Box::new(|d, _| c14(d))),
        ("confidence gap", Box::new(c15)),
        ("class-distance stats", Box::new(|d, _| c16(d))),
    ];
    let loaded = rruff();
    let mut cache = Cache::default();
    for (j, (name, f)) in data.into_iter().enumerate() {
        let status = match &loaded {
            Ok(None) => Status::NotRun("RRUFF data unavailable".into()),
            Err(e) => Status::Fail(e.clone()),
            Ok(Some(d)) => match f(d, &mut cache) {
                Ok(s) => Status::Pass(s),
                Err(s) => Status::Fail(s),
            },
        };
        report_line(j + 8, name, &status);
        results.push((j + 8, name, status));
    }
    let failed = results.iter().filter(|r| matches!(r.2, Status::Fail(_))).count();
    let passed = results.iter().filter(|r| matches!(r.2, Status::Pass(_))).count();
    println!("acceptance: {passed} passed, {failed} failed, {} not run", results.len() - passed - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report_line(n: usize, name: &str, status: &Status) {
    let (tag, detail) = match status {
        Status::Pass(d) => ("PASS", d),
        Status::Fail(d) => ("FAIL", d),
        Status::NotRun(d) => ("NOT RUN", d),
    };
    println!("criterion {n:>2} {name:<26} {tag}: {detail}");
}
