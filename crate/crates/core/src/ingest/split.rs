//! Plain-text split manifests.
//!
//! ```text
//! # spectral-forge split v1
//! # dataset=<id>	k=<folds>
//! <source_path>	<label>	<fold>
//! ```
//!
//! Fields are separated by a single tab. Relative source paths are resolved
//! against the manifest's directory when checking that they exist.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fsutil::write_atomic;

pub const SPLIT_HEADER: &str = "# spectral-forge split v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRecord {
    pub source_path: String,
    pub label: String,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub dataset_id: String,
    pub k: usize,
    pub records: Vec<SplitRecord>,
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fold index {fold} out of range for k={k} ({path})")]
    InconsistentFoldCount { path: String, fold: usize, k: usize },
    #[error("manifest references missing file {0}")]
    MissingFile(String),
    #[error("malformed manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl SplitManifest {
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.k == 0 {
            return Err(SplitError::InconsistentFoldCount {
                path: String::new(),
                fold: 0,
                k: 0,
            });
        }
        for r in &self.records {
            if r.fold >= self.k {
                return Err(SplitError::InconsistentFoldCount {
                    path: r.source_path.clone(),
                    fold: r.fold,
                    k: self.k,
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SPLIT_HEADER}");
        let _ = writeln!(out, "# dataset={}\tk={}", self.dataset_id, self.k);
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}", r.source_path, r.label, r.fold);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SplitError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == SPLIT_HEADER => {}
            _ => {
                return Err(SplitError::Malformed {
                    line: 1,
                    reason: format!("expected header `{SPLIT_HEADER}`"),
                })
            }
        }
        let mut dataset_id = String::new();
        let mut k = None;
        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if let Some(meta) = line.strip_prefix("# ") {
                for field in meta.split('\t') {
                    if let Some(v) = field.strip_prefix("dataset=") {
                        dataset_id = v.to_string();
                    } else if let Some(v) = field.strip_prefix("k=") {
                        k = Some(v.parse::<usize>().map_err(|_| SplitError::Malformed {
                            line: line_no,
                            reason: format!("bad fold count `{v}`"),
                        })?);
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(SplitError::Malformed {
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let fold = fields[2].parse::<usize>().map_err(|_| SplitError::Malformed {
                line: line_no,
                reason: format!("bad fold `{}`", fields[2]),
            })?;
            records.push(SplitRecord {
                source_path: fields[0].to_string(),
                label: fields[1].to_string(),
                fold,
            });
        }
        let k = k.ok_or(SplitError::Malformed {
            line: 2,
            reason: "missing k= metadata".into(),
        })?;
        let manifest = SplitManifest {
            dataset_id,
            k,
            records,
        };
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Writes the manifest atomically after validating fold indices.
pub fn persist_split(manifest: &SplitManifest, path: &Path) -> Result<(), SplitError> {
    manifest.validate()?;
    write_atomic(path, manifest.to_text().as_bytes()).map_err(|source| SplitError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reloads a manifest, failing if any referenced spectrum file is missing.
pub fn load_split(path: &Path) -> Result<SplitManifest, SplitError> {
    let text = fs::read_to_string(path).map_err(|source| SplitError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest = SplitManifest::parse(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for r in &manifest.records {
        let p = PathBuf::from(&r.source_path);
        let resolved = if p.is_absolute() { p } else { base.join(p) };
        if !resolved.exists() {
            return Err(SplitError::MissingFile(r.source_path.clone()));
        }
    }
    Ok(manifest)
}
