//! Recurrent transformer decoder for quantum memory experiments.
//!
//! Each detector layer updates an encoder memory through code-aware
//! self-attention; a decoder then either emits latent vectors for the next
//! iteration or predicts logical flips one bit at a time.

pub mod gradcheck;
pub mod mask;
pub mod model;
pub mod train;

pub use gradcheck::check_model_gradients;
pub use mask::{build_code_aware_mask, CodeAwareMask};
pub use model::{Batch, IterationKind, IterationPlan, MlDecoder, Model, ModelConfig};
pub use train::{train_curriculum, CircuitSource, Curriculum, DataSource, StageConfig, TraceRow, TrainingReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid training stage {stage}: {reason}")]
    Stage { stage: usize, reason: String },
    #[error("model expects {expected} detector layers of width {expected_width}, got {got} of width {got_width}")]
    LayerMismatch {
        expected: usize,
        expected_width: usize,
        got: usize,
        got_width: usize,
    },
    #[error("model predicts {expected} logicals, experiment has {got}")]
    LogicalMismatch { expected: usize, got: usize },
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Core(#[from] bbdec_core::CoreError),
    #[error(transparent)]
    Nn(#[from] bbdec_nn::NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MlError>;
