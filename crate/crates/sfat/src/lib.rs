//! SFAT: a semantic frame aggregation transformer for live-video
//! comment generation, with the full preprocessing, training and
//! retrieval-evaluation pipeline around it.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod training;
pub mod numerics;

pub use corpus::CorpusError;
pub use numerics::{NumericsError, Tensor};
