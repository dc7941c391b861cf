//! Seeded experiment protocols and reporting.

mod common;
mod config;
mod folds;
mod labels;
mod metrics;
mod report;
mod semisup;
mod shift;
mod supervised;
pub mod synthetic;
mod train;
mod transfer;

pub use config::{apply_flat_kv, derive_seed, to_flat_kv, ExperimentConfig};
pub use folds::{holdout_split, stratified_fraction, stratified_kfold, stratified_sample, FoldPlan};
pub use common::{cv_splits, dataset_tensor, partition, Partition};
pub use labels::LabelView;
pub use metrics::{confidence_gap, mean_std, ranked_classes, topk_accuracy};
pub use report::{emit_report, Aggregate, DatasetSummary, ExperimentReport, FoldMetrics, ReportCell, ReportFormat, REPORT_SCHEMA_VERSION};
pub use semisup::{
    augmentation_agreement, pretrain_autoencoder, pretrain_contrastive, run_autoencoder_features, run_contrastive, run_sgan, semi_sup_split,
    AutoencoderProtocol, ContrastiveProtocol, SemiSupSplit, SganProtocol,
};
pub use shift::{run_shift_robustness, shift_label, variant_label, ShiftProtocol};
pub use supervised::{
    build_model, fit_final, cell_label, dataset_peak_features, run_classical, run_distances, run_supervised, ClassicalProtocol, ModelKind, SupervisedProtocol, PEAK_BIN_WIDTH};
pub use train::{eval_loss, predict_proba, train_classifier, ClassifierData, EpochLog, TrainLog, TrainOptions};
pub use transfer::{attach_head, head_inference_cost, head_start, run_layer_freezing, run_transfer, FreezeProtocol, TransferProtocol};

use crate::classical::ClassicalError;
use crate::models::ModelError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset too small: {0}")]
    InsufficientData(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("report: {0}")]
    Report(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
}
