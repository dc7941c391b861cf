use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::spectrum::{parse_spectrum_file, ParseError, Spectrum, SpectrumKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindFilter {
    Raw,
    Processed,
    Any,
}

impl KindFilter {
    fn accepts(self, kind: SpectrumKind) -> bool {
        match self {
            KindFilter::Raw => kind == SpectrumKind::Raw,
            KindFilter::Processed => kind == SpectrumKind::Processed,
            KindFilter::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileFailure {
    pub path: String,
    pub error: ParseError,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no parseable spectra matching the filter under {0}")]
    EmptyCorpus(String),
    #[error("{} file(s) failed to parse, first: {}: {}", .0.len(), .0[0].path, .0[0].error)]
    ParseFailures(Vec<FileFailure>),
    #[error("duplicate spectrum record {0}")]
    Duplicate(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable collection of parsed spectra in deterministic path order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorpus {
    pub spectra: Vec<Spectrum>,
    /// Hex SHA-256 over `relative_path \t size \n` for every accepted file.
    pub manifest_hash: String,
}

impl RawCorpus {
    /// Builds a corpus from already-parsed spectra, rejecting duplicate
    /// `(rruff_id, kind, source_path)` triples. The hash covers paths only.
    pub fn from_spectra(mut spectra: Vec<Spectrum>) -> Result<Self, CorpusError> {
        spectra.sort_by(|a, b| a.source_path.cmp(&b.source_path));
        let mut seen = HashSet::new();
        let mut hasher = Sha256::new();
        for s in &spectra {
            if !seen.insert((s.rruff_id.clone(), s.kind, s.source_path.clone())) {
                return Err(CorpusError::Duplicate(s.source_path.clone()));
            }
            hasher.update(s.source_path.as_bytes());
            hasher.update(b"\n");
        }
        Ok(RawCorpus {
            spectra,
            manifest_hash: hex(&hasher.finalize()),
        })
    }

    pub fn len(&self) -> usize {
        self.spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Parses every matching file below `root_dir`, returning the corpus together
/// with the files that failed. Fails only when nothing parsed.
pub fn load_corpus_lenient(
    root_dir: &Path,
    filter: KindFilter,
) -> Result<(RawCorpus, Vec<FileFailure>), CorpusError> {
    let mut files = Vec::new();
    collect_files(root_dir, &mut files)?;
    files.sort();

    let mut spectra = Vec::new();
    let mut failures = Vec::new();
    let mut hasher = Sha256::new();
    for path in files {
        let path_str = path.to_string_lossy().into_owned();
        match SpectrumKind::from_file_name(&path_str) {
            Some(kind) if filter.accepts(kind) => {}
            _ => continue,
        }
        let bytes = fs::read(&path).map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        let rel = path.strip_prefix(root_dir).unwrap_or(&path);
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update(format!("\t{}\n", bytes.len()).as_bytes());
        let text = String::from_utf8_lossy(&bytes);
        match parse_spectrum_file(&path_str, &text) {
            Ok(s) => spectra.push(s),
            Err(error) => failures.push(FileFailure {
                path: path_str,
                error,
            }),
        }
    }
    for f in &failures {
        log::warn!("skipping {}: {}", f.path, f.error);
    }
    if spectra.is_empty() {
        return Err(CorpusError::EmptyCorpus(root_dir.display().to_string()));
    }
    let mut corpus = RawCorpus::from_spectra(spectra)?;
    corpus.manifest_hash = hex(&hasher.finalize());
    Ok((corpus, failures))
}

/// Strict variant: any parse failure aborts with the full failure list.
pub fn load_corpus(root_dir: &Path, filter: KindFilter) -> Result<RawCorpus, CorpusError> {
    match load_corpus_lenient(root_dir, filter) {
        Ok((corpus, failures)) if failures.is_empty() => Ok(corpus),
        Ok((_, failures)) => Err(CorpusError::ParseFailures(failures)),
        Err(e) => Err(e),
    }
}
