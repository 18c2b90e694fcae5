//! Corpus handling: comment and frame data model, wire formats,
//! tokenization, chat-stream preprocessing, window construction, the
//! deterministic pseudo-embedder and the synthetic-corpus generator.

pub mod anon;
pub mod jsonl;
pub mod pseudo;
pub mod record;
pub mod sfeb;
pub mod synth;
pub mod vocab;
pub mod window;

pub use anon::{anonymize, collect_emotes, user_hash, EmoteCount};
pub use jsonl::{load_comments, save_comments, LoadStats};
pub use pseudo::pseudo_embed;
pub use record::{ClipWindow, CommentKey, CommentRecord, Corpus, FrameTrack};
pub use sfeb::{read_index, read_sfeb, write_index, write_sfeb};
pub use synth::{load_corpus, load_planted, synth_corpus, PlantedKey, SynthConfig, SynthSummary};
pub use vocab::{detokenize, tokenize, tokenize_response, normalize_tokens, TokenSequence, Vocabulary, BOS_ID, CLS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID};
pub use window::{densest_window, sample_context, segment_clips, DensestWindow, SampledContext};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("token id {0} out of range for vocabulary of {1}")]
    IndexOutOfRange(usize, usize),
    #[error("text produced zero tokens: {0:?}")]
    EmptyText(String),
    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;
