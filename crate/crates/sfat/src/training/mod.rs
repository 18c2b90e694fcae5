//! Two-stage optimization: MLM pretraining of the text encoder, then
//! end-to-end comment-generation training; plus Adam and checkpointing.

pub mod checkpoint;
pub mod mlm;
pub mod optim;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use mlm::{mask_for_mlm, mlm_accuracy, pretrain, pretrain_with_log, PretrainOutcome};
pub use optim::{Adam, AdamConfig};
pub use trainer::{select_target, train, write_loss_csv, LossPoint, TrainOutcome, TrainingConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("NaN loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
}

pub type Result<T> = std::result::Result<T, TrainingError>;
