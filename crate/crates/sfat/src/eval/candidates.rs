//! Candidate-set construction and log-likelihood ranking.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{normalize_tokens, tokenize_response, ClipWindow, Corpus, TokenSequence, Vocabulary};
use crate::model::{score_candidate, ContextEncoding, ModelConfig, SfatModel};
use crate::numerics::Tensor;
use crate::training::select_target;

use super::{EvalError, Result};

pub const SET_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Cosine,
    Popularity,
    Random,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Cosine => "cosine",
            Strategy::Popularity => "popularity",
            Strategy::Random => "random",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub text: String,
    pub sequence: TokenSequence,
}

#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub window_id: String,
    pub strategy: Strategy,
    pub candidates: Vec<Candidate>,
    /// Index of the ground truth within `candidates`.
    pub ground_truth: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn norm_text(text: &str) -> String {
    normalize_tokens(text).join(" ")
}

/// Build one 10-candidate set: the ground truth (the same uniform
/// response selection as training, fixed by the eval seed) plus 9
/// distractors chosen by the strategy, shuffled deterministically.
/// Candidates are pairwise distinct after text normalization.
pub fn build_candidate_set(
    query: &ClipWindow,
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &ModelConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<CandidateSet> {
    let gt = select_target(query, 0, seed).ok_or_else(|| {
        EvalError::Evaluation(format!("query {} has no response comments", query.id()))
    })?;
    let gt_norm = norm_text(&gt.text);
    if gt_norm.is_empty() {
        return Err(EvalError::Evaluation(format!(
            "query {}: ground truth normalizes to empty text",
            query.id()
        )));
    }

    // Distinct normalized pool texts, excluding the ground truth.
    // BTreeMap keeps selection order-independent of comment order.
    let mut pool: BTreeMap<String, &str> = BTreeMap::new();
    for c in &corpus.comments {
        let n = norm_text(&c.text);
        if !n.is_empty() && n != gt_norm {
            pool.entry(n).or_insert(&c.text);
        }
    }
    if pool.len() < SET_SIZE - 1 {
        return Err(EvalError::Evaluation(format!(
            "query {}: only {} distinct pool comments for {} distractors",
            query.id(),
            pool.len(),
            SET_SIZE - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(
        seed ^ fnv1a(query.id().as_bytes()) ^ fnv1a(strategy.name().as_bytes()),
    );
    let distractors: Vec<String> = match strategy {
        Strategy::Random => {
            let keys: Vec<&String> = pool.keys().collect();
            keys.choose_multiple(&mut rng, SET_SIZE - 1).map(|k| (**k).clone()).collect()
        }
        Strategy::Popularity => {
            // Most frequent normalized texts within the query's stream.
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for c in &corpus.comments {
                if c.video_id == query.video_id {
                    let n = norm_text(&c.text);
                    if !n.is_empty() && n != gt_norm {
                        *counts.entry(n).or_default() += 1;
                    }
                }
            }
            let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut chosen: Vec<String> =
                ranked.into_iter().take(SET_SIZE - 1).map(|(t, _)| t).collect();
            // Fall back to the global pool when the stream is too small.
            for key in pool.keys() {
                if chosen.len() >= SET_SIZE - 1 {
                    break;
                }
                if !chosen.contains(key) {
                    chosen.push(key.clone());
                }
            }
            chosen
        }
        Strategy::Cosine => {
            // Mean joint embedding of the query's context comments.
            let dim = corpus.embed_dim;
            let mut ctx = vec![0.0f32; dim];
            let mut n = 0usize;
            for c in &query.context_comments {
                if let Ok(e) = corpus.embedding(c) {
                    for (a, b) in ctx.iter_mut().zip(e) {
                        *a += b;
                    }
                    n += 1;
                }
            }
            if n == 0 {
                return Err(EvalError::Evaluation(format!(
                    "query {}: no embedded context comments for the cosine strategy",
                    query.id()
                )));
            }
            let norm = ctx.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
            for v in &mut ctx {
                *v /= norm;
            }
            // Highest-cosine pool comment per normalized text.
            let mut best: BTreeMap<&String, f32> = BTreeMap::new();
            for c in &corpus.comments {
                let n = norm_text(&c.text);
                if let Some((key, _)) = pool.get_key_value(&n) {
                    if let Ok(e) = corpus.embedding(c) {
                        let cos: f32 = ctx.iter().zip(e).map(|(a, b)| a * b).sum();
                        let slot = best.entry(key).or_insert(f32::MIN);
                        if cos > *slot {
                            *slot = cos;
                        }
                    }
                }
            }
            let mut ranked: Vec<(&String, f32)> = best.into_iter().collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
            ranked.into_iter().take(SET_SIZE - 1).map(|(t, _)| t.clone()).collect()
        }
    };
    if distractors.len() < SET_SIZE - 1 {
        return Err(EvalError::Evaluation(format!(
            "query {}: {} strategy produced only {} distractors",
            query.id(),
            strategy.name(),
            distractors.len()
        )));
    }

    let mut texts: Vec<String> = Vec::with_capacity(SET_SIZE);
    texts.push(gt_norm.clone());
    texts.extend(distractors);
    texts.shuffle(&mut rng);
    let ground_truth = texts.iter().position(|t| *t == gt_norm).unwrap();
    let candidates = texts
        .into_iter()
        .map(|text| {
            let sequence = tokenize_response(&text, vocab, config.p_r)?;
            Ok(Candidate { text, sequence })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet { window_id: query.id(), strategy, candidates, ground_truth })
}

/// 1-based rank of the ground truth under descending scores; ties break
/// by candidate index.
pub fn rank_with_scores(scores: &[f64], ground_truth: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i == ground_truth).unwrap() + 1
}

/// Score all candidates against the query's encoded context and video
/// embedding, and return the ground truth's 1-based rank.
pub fn rank_candidates(
    set: &CandidateSet,
    context: &ContextEncoding<f32>,
    video: &Tensor<f32>,
    model: &SfatModel<f32>,
    normalize: bool,
) -> Result<usize> {
    let mut scores = Vec::with_capacity(set.candidates.len());
    for (i, cand) in set.candidates.iter().enumerate() {
        let s = score_candidate(&cand.sequence, context, video, model, normalize).map_err(
            |e| EvalError::Evaluation(format!("candidate {i} of {}: {e}", set.window_id)),
        )?;
        scores.push(s);
    }
    Ok(rank_with_scores(&scores, set.ground_truth))
}
