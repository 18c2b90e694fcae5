//! Retrieval evaluation: candidate-set construction (cosine similarity,
//! popularity, random), log-likelihood ranking, and Recall@K / MR / MRR.

pub mod candidates;
pub mod metrics;

pub use candidates::{build_candidate_set, rank_candidates, rank_with_scores, Candidate, CandidateSet, Strategy};
pub use metrics::{compute_metrics, EvalReport, StrategyMetrics};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Corpus, Vocabulary};
use crate::model::{encode_window, Mode, SfatModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("report error: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Options for a full evaluation pass.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub seed: u64,
    /// Length-normalize candidate log-likelihoods (default true).
    pub normalize: bool,
    /// Run the uniform-aggregation ablation.
    pub uniform_aggregation: bool,
    /// Label recorded in the report (usually the checkpoint path).
    pub checkpoint: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { seed: 0, normalize: true, uniform_aggregation: false, checkpoint: None }
    }
}

/// Evaluate all three candidate strategies over every usable query
/// window (non-empty context and response), using `n_c_eval` context
/// comments per query.
pub fn evaluate(
    model: &SfatModel<f32>,
    corpus: &Corpus,
    vocab: &Vocabulary,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let frozen = model.frozen();
    let queries = corpus.trainable_windows();
    if queries.is_empty() {
        return Err(EvalError::Report("no query windows with context and response".into()));
    }
    let mut ranks: std::collections::BTreeMap<Strategy, Vec<usize>> = Default::default();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for query in &queries {
        let enc = encode_window(
            query,
            corpus,
            vocab,
            frozen.config.n_c_eval,
            &frozen,
            Mode::Eval,
            &mut rng,
            options.uniform_aggregation,
        )?;
        for strategy in [Strategy::Cosine, Strategy::Popularity, Strategy::Random] {
            let set = build_candidate_set(query, corpus, vocab, &frozen.config, strategy, options.seed)?;
            let rank = rank_candidates(&set, &enc.context, &enc.aggregation.video, &frozen, options.normalize)?;
            ranks.entry(strategy).or_default().push(rank);
        }
    }
    let mut report = EvalReport {
        strategies: Default::default(),
        n_queries: queries.len(),
        seed: options.seed,
        checkpoint: options.checkpoint.clone(),
        normalize: options.normalize,
    };
    for (strategy, rs) in &ranks {
        report.strategies.insert(strategy.name().to_string(), compute_metrics(rs)?);
    }
    Ok(report)
}
