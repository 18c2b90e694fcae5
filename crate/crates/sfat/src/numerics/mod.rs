//! Differentiable computation substrate: tensors with reverse-mode
//! gradients, the transformer building blocks, and a finite-difference
//! gradient oracle.

pub mod attention;
pub mod gradcheck;
pub mod tensor;

pub use attention::{multi_head_attention, AttentionParams, AttentionSpec};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use tensor::{backward, softmax_with_temperature, Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("undefined loss: {0}")]
    UndefinedLoss(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
