//! Small dense numeric substrate: tensors, a reverse-mode graph, losses,
//! SGD, finite-difference checking and checkpoints. Double precision
//! throughout.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod losses;
mod optim;
mod params;
mod tensor;

use thiserror::Error;

pub use graph::{Gradients, Graph, Var};
pub use optim::{LrSchedule, Sgd};
pub use params::{BoundParams, Linear, ParamId, ParamSet};
pub use tensor::{sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite gradient for {0}")]
    NonFinite(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("parameter layout mismatch: {0}")]
    ParamLayout(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
