//! Peak-feature baselines: peak detectors, peak-count histograms, and
//! nearest-neighbour / SVM classifiers with grid search.

mod features;
mod knn;
mod peaks;
mod search;
mod svm;

pub use features::{featurize, PeakFeatureVector, DEFAULT_BIN_WIDTH};
pub use knn::{knn_classify, squared_euclidean, KnnClassifier, KnnConfig};
pub use peaks::{cwt, detect_peaks, detect_peaks_cwt, detect_peaks_local, ricker, PeakDetectorConfig, PeakMethod};
pub use search::{class_distance_stats, grid_search, CellScore, DistanceStats, GridSearchResult, ParamCell};
pub use svm::{smo_solve, svm_train, BinarySolution, SvmConfig, SvmModel};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("signal length {signal_len} is not a multiple of bin width {bin_width}")]
    BinMismatch { signal_len: usize, bin_width: usize },
    #[error("peak index {0} outside the signal")]
    PeakOutOfRange(usize),
    #[error("SVM training needs at least two classes")]
    SingleClassInput,
    #[error("SMO iteration cap reached for class pair ({class_a}, {class_b})")]
    SolverIterationCapExceeded { class_a: usize, class_b: usize },
    #[error("no class has two members; mean inter-class distance is {inter}")]
    IntraClassUndefined { inter: f64 },
}

/// Runs the configured detector on every row and histograms the peaks.
pub fn peak_features(
    rows: &[Vec<f64>],
    cfg: &PeakDetectorConfig,
    bin_width: usize,
    jobs: usize,
) -> Result<Vec<PeakFeatureVector>, ClassicalError> {
    cfg.validate().map_err(ClassicalError::InvalidConfig)?;
    crate::par::map_indexed(rows.len(), jobs, |i| {
        featurize(&detect_peaks(&rows[i], cfg), rows[i].len(), bin_width)
    })
    .into_iter()
    .collect()
}
