//! A small dense-tensor engine with tape-based reverse-mode differentiation.
//!
//! It covers exactly what a transformer decoder needs: matrix products, biases,
//! GELU, layer normalization, dropout, row gathers, a fused multi-head attention
//! core with additive masks, and a fused sigmoid cross-entropy. Storage is
//! contiguous row-major; a batch of sequences is laid out as stacked rows.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
mod scalar;
pub mod tensor;

pub use adam::{Adam, AdamConfig, LrSchedule};
pub use graph::{Gradients, Graph, Mode, NodeId};
pub use scalar::Scalar;
pub use tensor::{ParamId, ParamStore, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    ShapeData { shape: Vec<usize>, len: usize },
    #[error("backward has already consumed this graph; record a fresh forward pass")]
    BackwardConsumed,
    #[error("loss must be a single value, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter `{0}` is already registered")]
    DuplicateParam(String),
    #[error("no parameter named `{0}`")]
    UnknownParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
