//! Dense tensors, reverse-mode differentiation, layers, losses and
//! optimizers for the 1-D networks.

mod checkpoint;
mod graph;
pub mod kernels;
mod layers;
mod optim;
mod tensor;

pub mod gradcheck;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{Gradients, Graph, Var};
pub use layers::{Forward, Init, LayerSpec, Param, Sequential};
pub use optim::{adam_step, schedule_step, Adam, PlateauState, ScheduleDecision, TrainSchedule};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not connected to any trainable tensor")]
    DetachedTensor,
    #[error("backward needs a scalar loss")]
    NonScalarLoss,
    #[error("contrastive loss needs at least two positive pairs")]
    InsufficientBatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Inverse-frequency class weights `N / (C·count_c)`; absent classes get 1.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { n / (num_classes as f64 * c as f64) })
        .collect()
}
