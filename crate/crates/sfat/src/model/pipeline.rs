//! Shared forward path from a clip window to the decoder inputs
//! (encoded context comments plus aggregated video embedding), used by
//! both the trainer and the evaluator.

use rand_chacha::ChaCha8Rng;

use crate::corpus::{sample_context, ClipWindow, Corpus, Vocabulary};
use crate::numerics::Real;

use super::aggregation::{aggregate, similarity_scores, AggregationOutput};
use super::encoders::{encode_comments, encode_frames, ContextEncoding, Mode};
use super::params::SfatModel;
use super::Result;

#[derive(Debug, Clone)]
pub struct WindowEncoding<F: Real> {
    pub context: ContextEncoding<F>,
    pub aggregation: AggregationOutput<F>,
}

/// Encode one window end to end: sample up to `n_c` context comments,
/// run both encoders, and aggregate the frames. `uniform` switches the
/// aggregation to the exact-1/t1 ablation.
pub fn encode_window<F: Real>(
    window: &ClipWindow,
    corpus: &Corpus,
    vocab: &Vocabulary,
    n_c: usize,
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    uniform: bool,
) -> Result<WindowEncoding<F>> {
    let cfg = &model.config;
    let mut embed_of =
        |c: &crate::corpus::CommentRecord| corpus.embedding(c).map(|e| e.to_vec());
    let sampled = sample_context(window, n_c, vocab, cfg.p_c, &mut embed_of)?;
    let context = encode_comments(&sampled.sequences, &sampled.mask, model, mode, rng)?;
    let frames = encode_frames(&window.frame_rows, model, mode, rng)?;
    let sims = similarity_scores(&frames, &sampled.embeds, &sampled.mask, model)?;
    let aggregation = aggregate(&frames, &sims, &sampled.mask, cfg.epsilon, uniform)?;
    Ok(WindowEncoding { context, aggregation })
}
