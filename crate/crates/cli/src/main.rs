//! `spectral-forge` command-line entry point.
//!
//! Exit status: 0 on success, 1 on a domain error (bad data, failed
//! training invariant, I/O), 2 on a usage error.

mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}

domain_from!(
    std::io::Error,
    serde_json::Error,
    spectral_forge::experiments::ExperimentError,
    spectral_forge::preprocess::PreprocessError,
    spectral_forge::ingest::CorpusError,
    spectral_forge::ingest::SplitError,
    spectral_forge::nn::NnError,
    spectral_forge::models::ModelError,
    spectral_forge::classical::ClassicalError
);

const SEED_ENV: &str = "SPECTRAL_FORGE_SEED";

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let seed = match cli.seed.map_or_else(seed_from_env, |s| Ok(Some(s))) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let jobs = cli.jobs.unwrap_or_else(spectral_forge::par::default_jobs).max(1);
    match commands::run(&cli.command, seed, jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    match e {
        CliError::Usage(m) => {
            eprintln!("error: {m}\n\nUsage: spectral-forge [OPTIONS] <COMMAND>\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        CliError::Domain(m) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
