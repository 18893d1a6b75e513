//! Dense tensors, a reverse-mode tape, parameter storage, AdamW and the
//! checkpoint container.

mod checkpoint;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, TensorEntry, CHECKPOINT_MAGIC};
pub use optim::{AdamW, AdamWConfig};
pub use params::{BoundParams, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{softmax_in_place, Tape, Var, RMS_EPS, SQUASH_EPS};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("checkpoint format: {0}")]
    Format(String),
}
