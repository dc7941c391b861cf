//! Batch preprocessing: class pruning, fixed-grid resampling, normalization,
//! shifting and augmentation.

mod augment;
mod config;
mod dataset;
mod transform;

use thiserror::Error;

pub use augment::{add_cos, apply_op, augment, augment_with_rng, AugmentOp, AugmentationSpec};
pub use config::{parse_kv, NormMode, PreprocessConfig};
pub use dataset::{build_dataset, DatasetHeader, DroppedSpectrum, SpectralDataset, DATASET_MAGIC};
pub use transform::{grid_spectrum, normalize, prune_classes, resample, shift_spectrum};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no class has at least {0} spectra")]
    EmptyAfterPruning(usize),
    #[error("fewer than 2 points inside the grid range: {0}")]
    DegenerateSpectrum(String),
    #[error("row is constant and cannot be normalized")]
    ConstantRow,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset format error: {0}")]
    Format(String),
    #[error("io error at {0}: {1}")]
    Io(String, #[source] std::io::Error),
}
