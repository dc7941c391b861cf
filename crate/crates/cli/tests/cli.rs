use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spectral-forge"));
    c.env_remove("SPECTRAL_FORGE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Three minerals with distinct peak positions, six RAW files each.
fn write_corpus(dir: &Path) {
    for (m, name) in ["Alpha", "Beta", "Gamma"].iter().enumerate() {
        for j in 0..6 {
            let mut text = format!("##NAMES={name}\n##RRUFFID=R{m}{j:04}\n");
            let mut x = 150.0;
            while x < 1700.0 {
                let c = 400.0 + 300.0 * m as f64;
                let y = 10.0 + 100.0 * (-((x - c - j as f64) / 8.0f64).powi(2)).exp() + 0.5 * (x / 37.0f64).sin();
                text.push_str(&format!("{x:.1}, {y:.4}\n"));
                x += 1.7;
            }
            text.push_str("##END=\n");
            fs::write(dir.join(format!("{name}__R{m}{j:04}__Raman__Raman_Data_RAW.txt")), text).unwrap();
        }
    }
}

const TINY: &[&str] = &[
    "--set",
    "cnn.conv_channels=[2,4,4]",
    "--set",
    "cnn.kernel_sizes=[5,3]",
    "--set",
    "cnn.dense_width=8",
    "--epochs",
    "2",
    "--batch-size",
    "8",
    "--folds",
    "3",
];

struct Fixture {
    dir: tempfile::TempDir,
    dataset: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir(&raw).unwrap();
    write_corpus(&raw);
    let dataset = dir.path().join("ds.bin");
    let o = run(&["preprocess", "--in", raw.to_str().unwrap(), "--kind", "raw", "--out", dataset.to_str().unwrap(), "--n-min", "3", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    Fixture { dir, dataset }
}

fn experiment(f: &Fixture, cmd: &str, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = f.dir.path().join(out);
    let mut args = vec![cmd, "--dataset", f.dataset.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"];
    if !extra.contains(&"--jobs") {
        args.extend_from_slice(&["--jobs", "2"]);
    }
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    (run(&args), out)
}

#[test]
fn preprocess_writes_dataset_and_config_copy() {
    let f = fixture();
    assert!(f.dataset.exists());
    let cfg = fs::read_to_string(f.dir.path().join("ds.bin.run_config.kv")).unwrap();
    assert!(cfg.contains("run.command=preprocess"));
    assert!(cfg.contains("seed=7"));
    assert!(cfg.contains("n_min=3"));
}

#[test]
fn unknown_flag_is_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["train", "--dataset", "x.bin", "--out", out.to_str().unwrap(), "--bogus"]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!out.exists());
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let o = run(&["train", "--dataset", "x.bin", "--out", out.to_str().unwrap(), "--set", "no.such.key=1"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn missing_dataset_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--dataset", dir.path().join("none.bin").to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_seed_env_is_usage_error() {
    let o = bin().env("SPECTRAL_FORGE_SEED", "abc").args(["distances", "--dataset", "x", "--out", "y"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn train_is_reproducible_and_replayable_from_run_config() {
    let f = fixture();
    let ckpt = f.dir.path().join("model.ckpt");
    let (o, a) = experiment(&f, "train", "a", &["--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["train.json", "train.txt", "train_loss.csv", "run_config.kv", "timing.kv"] {
        assert!(a.join(name).exists(), "{name}");
    }
    assert!(ckpt.exists());
    let (o, b) = experiment(&f, "train", "b", &["--jobs", "1"]);
    assert_eq!(code(&o), 0);
    let ja = fs::read(a.join("train.json")).unwrap();
    assert_eq!(ja, fs::read(b.join("train.json")).unwrap());

    // Replay from the stored config alone.
    let c = f.dir.path().join("c");
    let o = run(&[
        "train",
        "--dataset",
        f.dataset.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--config",
        a.join("run_config.kv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(ja, fs::read(c.join("train.json")).unwrap());

    // The seed from the environment is honoured when no flag is given.
    let d = f.dir.path().join("d");
    let o = bin()
        .env("SPECTRAL_FORGE_SEED", "3")
        .args(["train", "--dataset", f.dataset.to_str().unwrap(), "--out", d.to_str().unwrap()])
        .args(TINY)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(ja, fs::read(d.join("train.json")).unwrap());

    let (o, e) = experiment(&f, "eval", "e", &["--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(e.join("eval.json")).unwrap()).unwrap();
    assert_eq!(r["folds"][0]["eval_size"], 18);

    let g = f.dir.path().join("g");
    let o = run(&["gradcam", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", f.dataset.to_str().unwrap(), "--row", "4", "--out", g.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(g.join("gradcam_row4.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 1393);
}

#[test]
fn shift_robustness_grid_layout() {
    let f = fixture();
    let (o, out) = experiment(&f, "shift-robustness", "s", &["--m", "2,64", "--n", "2", "--shifts", "0,15,30"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("shift_robustness.json")).unwrap()).unwrap();
    assert_eq!(r["cells"].as_array().unwrap().len(), 6);
    let table = fs::read_to_string(out.join("shift_robustness.txt")).unwrap();
    assert!(table.contains("shift=30") && table.contains("m=64,n=2"));
}

#[test]
fn baseline_and_distances_run() {
    let f = fixture();
    let (o, out) = experiment(&f, "baseline", "base", &["--knn-k", "1,3", "--detector", "local", "--formats", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("baseline.json").exists());
    assert!(!out.join("baseline.txt").exists());
    let (o, out) = experiment(&f, "distances", "dist", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("distances.json")).unwrap()).unwrap();
    assert!(r["cells"][0]["metrics"]["inter"].as_f64().unwrap() > 0.0);
}

#[test]
fn semi_supervised_and_transfer_commands_run() {
    let f = fixture();
    let (o, out) = experiment(&f, "sgan", "sg", &["--labeled", "0.5", "--set", "protocol.latent_dim=4", "--set", "protocol.generator_channels=8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sgan.json")).unwrap()).unwrap();
    assert_eq!(r["extras"]["unlabeled_label_reads"], 0);
    let (o, _) = experiment(&f, "contrastive", "co", &["--labeled", "0.5", "--set", "protocol.projection_hidden=8", "--set", "protocol.projection_dim=4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (o, _) = experiment(&f, "autoencoder", "ae", &["--labeled", "0.5", "--set", "protocol.hidden=16", "--set", "protocol.latent_dim=8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (o, _) = experiment(&f, "freeze-layers", "fr", &["--sizes", "6,9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Three classes cannot hold out two and still pretrain on two.
    let (o, _) = experiment(&f, "transfer", "tr", &["--c", "2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn ingest_writes_listing_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir(&raw).unwrap();
    write_corpus(&raw);
    fs::write(raw.join("Bad__R9__Raman__Raman_Data_RAW.txt"), "garbage").unwrap();
    let out = dir.path().join("ing");
    let o = run(&["ingest", "--in", raw.to_str().unwrap(), "--kind", "raw", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let o = run(&["ingest", "--in", raw.to_str().unwrap(), "--kind", "raw", "--out", out.to_str().unwrap(), "--lenient", "--folds", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("corpus.tsv")).unwrap().lines().count(), 19);
    let split = fs::read_to_string(out.join("split.tsv")).unwrap();
    assert!(split.starts_with("# spectral-forge split v1"));
}
