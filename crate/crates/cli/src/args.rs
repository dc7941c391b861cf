//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spectral-forge", version, about = "Raman spectrum classification: preprocessing, baselines, CNN experiments")]
pub struct Cli {
    /// Seed for all randomness; falls back to SPECTRAL_FORGE_SEED, then the config file, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel jobs for independent folds and grid cells (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Raw,
    Processed,
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Detector {
    Cwt,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
    Csv,
}

/// Options shared by every command that runs an experiment.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Preprocessed dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for reports, run config and timing sidecar.
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key=value file (e.g. a previous run_config.kv).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `key=value`; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Report formats to write.
    #[arg(long, value_delimiter = ',', default_value = "json,table,csv")]
    pub formats: Vec<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a RRUFF directory; write a corpus listing and a stratified split manifest.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "any")]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        /// Skip unparseable files instead of failing.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Build a fixed-grid, normalized dataset file from a RRUFF directory.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
        /// Minimum spectra per mineral.
        #[arg(long)]
        n_min: Option<usize>,
        /// Preprocessing override `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Peak-feature KNN / SVM baselines with cross-validation.
    Baseline {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        detector: Option<Detector>,
        /// KNN neighbour counts.
        #[arg(long, value_delimiter = ',')]
        knn_k: Vec<usize>,
        /// SVM box constraints (crossed with --svm-gamma).
        #[arg(long, value_delimiter = ',')]
        svm_c: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        svm_gamma: Vec<f64>,
    },
    /// Cross-validated neural model training; optionally save a final model.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// cnn, mlp_s, mlp_m, mlp_l or cnn_knn.
        #[arg(long)]
        model: Option<String>,
        /// Also fit on the whole training pool and save the network here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score a saved network on a dataset.
    Eval {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score only the held-out test rows instead of every row.
        #[arg(long)]
        test_only: bool,
    },
    /// Train pooling variants and score translated test spectra.
    ShiftRobustness {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Pool sizes m.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Pooling depths n (crossed with --m).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Shifts in cm⁻¹.
        #[arg(long, value_delimiter = ',')]
        shifts: Vec<f64>,
    },
    /// Semi-supervised GAN against a supervised baseline.
    Sgan {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Labeled fraction p.
        #[arg(long)]
        labeled: Option<f64>,
    },
    /// Contrastive pretraining with a linear head on frozen features.
    Contrastive {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        labeled: Option<f64>,
    },
    /// Pretrain on subsets, freeze the first conv blocks, retrain the rest.
    FreezeLayers {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// Sparse autoencoder features against a supervised baseline.
    Autoencoder {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        labeled: Option<f64>,
    },
    /// Head-only transfer to held-out classes.
    Transfer {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Numbers of held-out classes.
        #[arg(long, value_delimiter = ',')]
        c: Vec<usize>,
    },
    /// Grad-CAM importance curve for one spectrum.
    Gradcam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Dataset row index.
        #[arg(long)]
        row: usize,
        /// Class to explain; defaults to the predicted class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Intra- and inter-class distances of peak-feature vectors.
    Distances {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_enum)]
        detector: Option<Detector>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Preprocess { .. } => "preprocess",
            Command::Baseline { .. } => "baseline",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::ShiftRobustness { .. } => "shift-robustness",
            Command::Sgan { .. } => "sgan",
            Command::Contrastive { .. } => "contrastive",
            Command::FreezeLayers { .. } => "freeze-layers",
            Command::Autoencoder { .. } => "autoencoder",
            Command::Transfer { .. } => "transfer",
            Command::Gradcam { .. } => "gradcam",
            Command::Distances { .. } => "distances",
        }
    }
}
