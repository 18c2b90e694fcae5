//! The SFAT model: modality encoders, similarity-weighted frame
//! aggregation, and the dual cross-attention comment decoder.

pub mod aggregation;
pub mod config;
pub mod decoder;
pub mod encoders;
pub mod params;
pub mod pipeline;

pub use aggregation::{aggregate, similarity_scores, AggregationOutput};
pub use config::ModelConfig;
pub use decoder::{
    decoder_forward, generate, score_candidate, DecoderActivations, GenStrategy,
    GeneratedComment,
};
pub use encoders::{encode_comments, encode_frames, ContextEncoding, Mode};
pub use params::SfatModel;
pub use pipeline::{encode_window, WindowEncoding};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("scoring error: {0}")]
    Scoring(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
