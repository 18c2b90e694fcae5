//! Comment decoder: causal self-attention over the target, cross-
//! attention to the encoded context comments, cross-attention to the
//! aggregated video embedding, feed-forward, vocabulary head; plus
//! autoregressive generation and candidate scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{detokenize, TokenSequence, Vocabulary, BOS_ID, CLS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID};
use crate::numerics::{multi_head_attention, AttentionSpec, Real, Tensor};

use super::encoders::{ContextEncoding, Mode};
use super::params::SfatModel;
use super::{ModelError, Result};

/// Intermediate activations of the final decoder layer plus the logits.
#[derive(Debug, Clone)]
pub struct DecoderActivations<F: Real> {
    /// Word + positional embedding of the target `[len, d_t]`.
    pub embedded: Tensor<F>,
    /// After the last layer's causal self-attention sublayer.
    pub self_attended: Tensor<F>,
    /// After cross-attention to the context comments.
    pub context_attended: Tensor<F>,
    /// After cross-attention to the video embedding.
    pub video_attended: Tensor<F>,
    /// `[len, vocab_size]`.
    pub logits: Tensor<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenStrategy {
    Greedy,
    /// Sample from the renormalized top-k tokens.
    TopK { k: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct GeneratedComment {
    /// Generated ids with BOS/EOS stripped.
    pub token_ids: Vec<usize>,
    pub text: String,
    /// Log-probability of each emitted token (EOS included when hit).
    pub token_logprobs: Vec<f64>,
    pub total_logprob: f64,
    pub normalized_logprob: f64,
}

/// Teacher-forced decoder pass over `target_ids` (must begin with BOS).
pub fn decoder_forward<F: Real>(
    target_ids: &[usize],
    context: &ContextEncoding<F>,
    video: &Tensor<F>,
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<DecoderActivations<F>> {
    let cfg = &model.config;
    if target_ids.is_empty() || target_ids[0] != BOS_ID {
        return Err(ModelError::Contract("decoder target must begin with BOS".into()));
    }
    if target_ids.len() > cfg.p_r {
        return Err(ModelError::Contract(format!(
            "target of {} tokens exceeds the response budget p_r={}",
            target_ids.len(),
            cfg.p_r
        )));
    }
    if video.shape() != [1, cfg.d_v] {
        return Err(ModelError::Dimension(format!(
            "video embedding of shape {:?}, expected [1, {}]",
            video.shape(),
            cfg.d_v
        )));
    }
    if !context.mask.iter().any(|m| *m) {
        return Err(ModelError::Contract("decoder requires at least one valid context comment".into()));
    }
    let dropping = mode == Mode::Train && cfg.dropout > 0.0;
    let causal_spec = AttentionSpec {
        num_heads: cfg.heads,
        model_dim: cfg.d_t,
        causal: true,
        dropout_rate: cfg.dropout,
    };
    let cross_spec = AttentionSpec { causal: false, ..causal_spec };

    // Bridge the video embedding into the text width when they differ.
    let video_kv = if cfg.d_v == cfg.d_t {
        video.clone()
    } else {
        video
            .matmul(model.get("dec.v_bridge.w")?)?
            .add_row(model.get("dec.v_bridge.b")?)?
    };

    let positions: Vec<usize> = (0..target_ids.len()).collect();
    let embedded = model
        .get("emb.word")?
        .gather_rows(target_ids)?
        .add(&model.get("emb.pos_dec")?.gather_rows(&positions)?)?;

    let mut x = embedded.clone();
    let mut self_attended = x.clone();
    let mut context_attended = x.clone();
    let mut video_attended = x.clone();
    for l in 0..cfg.l_d {
        let p = format!("dec.l{l}");
        let ln1 = x.layer_norm(model.get(&format!("{p}.ln1.g"))?, model.get(&format!("{p}.ln1.b"))?)?;
        let sa = multi_head_attention(
            &ln1,
            &ln1,
            &ln1,
            &model.attention(&format!("{p}.sa"))?,
            &causal_spec,
            None,
            if dropping { Some(rng) } else { None },
        )?;
        x = x.add(&sa)?;
        self_attended = x.clone();

        let ln2 = x.layer_norm(model.get(&format!("{p}.ln2.g"))?, model.get(&format!("{p}.ln2.b"))?)?;
        let ca_c = multi_head_attention(
            &ln2,
            &context.c,
            &context.c,
            &model.attention(&format!("{p}.ca_c"))?,
            &cross_spec,
            Some(&context.mask),
            if dropping { Some(rng) } else { None },
        )?;
        x = x.add(&ca_c)?;
        context_attended = x.clone();

        let ln3 = x.layer_norm(model.get(&format!("{p}.ln3.g"))?, model.get(&format!("{p}.ln3.b"))?)?;
        let ca_v = multi_head_attention(
            &ln3,
            &video_kv,
            &video_kv,
            &model.attention(&format!("{p}.ca_v"))?,
            &cross_spec,
            None,
            if dropping { Some(rng) } else { None },
        )?;
        x = x.add(&ca_v)?;
        video_attended = x.clone();

        let ln4 = x.layer_norm(model.get(&format!("{p}.ln4.g"))?, model.get(&format!("{p}.ln4.b"))?)?;
        let mut h = ln4
            .matmul(model.get(&format!("{p}.ffn.w1"))?)?
            .add_row(model.get(&format!("{p}.ffn.b1"))?)?
            .relu();
        if dropping {
            h = h.dropout(cfg.dropout, rng)?;
        }
        let ffn = h
            .matmul(model.get(&format!("{p}.ffn.w2"))?)?
            .add_row(model.get(&format!("{p}.ffn.b2"))?)?;
        x = x.add(&ffn)?;
    }
    let x = x.layer_norm(model.get("dec.ln_f.g")?, model.get("dec.ln_f.b")?)?;
    let logits = x.matmul(model.get("dec.head.w")?)?.add_row(model.get("dec.head.b")?)?;
    Ok(DecoderActivations { embedded, self_attended, context_attended, video_attended, logits })
}

/// Log-softmax of one logits row, computed in f64 with max subtraction.
fn row_log_probs<F: Real>(row: &[F]) -> Vec<f64> {
    let vals: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    vals.iter().map(|v| v - lse).collect()
}

/// Specials that autoregressive decoding never emits (EOS excepted).
const SUPPRESSED: [usize; 5] = [PAD_ID, UNK_ID, CLS_ID, MASK_ID, BOS_ID];

/// Autoregressive decoding from BOS; stops at EOS, `max_len` tokens, or
/// the positional budget p_r. Log-probabilities come from the full
/// softmax even though special tokens are excluded from selection.
pub fn generate<F: Real>(
    context: &ContextEncoding<F>,
    video: &Tensor<F>,
    model: &SfatModel<F>,
    vocab: &Vocabulary,
    strategy: GenStrategy,
    max_len: usize,
) -> Result<GeneratedComment> {
    if max_len == 0 {
        return Err(ModelError::Parameter("max_len must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sampler = match strategy {
        GenStrategy::Greedy => None,
        GenStrategy::TopK { k, seed } => {
            if k == 0 {
                return Err(ModelError::Parameter("top-k requires k >= 1".into()));
            }
            Some((k, ChaCha8Rng::seed_from_u64(seed)))
        }
    };
    let mut ids = vec![BOS_ID];
    let mut token_logprobs = Vec::new();
    let mut token_ids = Vec::new();
    while token_ids.len() < max_len && ids.len() < model.config.p_r {
        let acts = decoder_forward(&ids, context, video, model, Mode::Eval, &mut rng)?;
        let vocab_size = model.config.vocab_size;
        let last = &acts.logits.data()[(ids.len() - 1) * vocab_size..ids.len() * vocab_size];
        let logp = row_log_probs(last);
        let mut ranked: Vec<usize> = (0..vocab_size)
            .filter(|id| !SUPPRESSED.contains(id))
            .collect();
        ranked.sort_by(|a, b| logp[*b].partial_cmp(&logp[*a]).unwrap().then(a.cmp(b)));
        let next = match &mut sampler {
            None => ranked[0],
            Some((k, rng)) => {
                let top = &ranked[..(*k).min(ranked.len())];
                let weights: Vec<f64> = top.iter().map(|id| logp[*id].exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut chosen = top[top.len() - 1];
                for (id, w) in top.iter().zip(&weights) {
                    if pick < *w {
                        chosen = *id;
                        break;
                    }
                    pick -= w;
                }
                chosen
            }
        };
        token_logprobs.push(logp[next]);
        if next == EOS_ID {
            break;
        }
        token_ids.push(next);
        ids.push(next);
    }
    let total_logprob: f64 = token_logprobs.iter().sum();
    let steps = token_logprobs.len().max(1);
    Ok(GeneratedComment {
        text: detokenize(&token_ids, vocab)?,
        token_ids,
        total_logprob,
        normalized_logprob: total_logprob / steps as f64,
        token_logprobs,
    })
}

/// Teacher-forced log-likelihood of a BOS…EOS candidate; PAD positions
/// are excluded, and `normalize` divides by the scored token count.
pub fn score_candidate<F: Real>(
    candidate: &TokenSequence,
    context: &ContextEncoding<F>,
    video: &Tensor<F>,
    model: &SfatModel<F>,
    normalize: bool,
) -> Result<f64> {
    let len = candidate.non_pad_len();
    let ids = &candidate.ids[..len];
    if len < 2 || ids[0] != BOS_ID {
        return Err(ModelError::Scoring(
            "candidate must carry BOS plus at least one scored token".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Inputs are all tokens but the last; position i predicts ids[i+1].
    let acts = decoder_forward(&ids[..len - 1], context, video, model, Mode::Eval, &mut rng)?;
    let vocab_size = model.config.vocab_size;
    let mut total = 0.0f64;
    for i in 0..len - 1 {
        let row = &acts.logits.data()[i * vocab_size..(i + 1) * vocab_size];
        total += row_log_probs(row)[ids[i + 1]];
    }
    Ok(if normalize { total / (len - 1) as f64 } else { total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::encoders::encode_comments;

    fn tiny() -> ModelConfig {
        ModelConfig {
            l_e: 1,
            l_d: 2,
            d_t: 8,
            d_v: 8,
            heads: 2,
            input_embed_dim: 8,
            t1: 3,
            n_c_train: 2,
            n_c_eval: 2,
            p_c: 6,
            p_r: 8,
            dropout: 0.0,
            epsilon: 0.1,
            vocab_size: 16,
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn fixture() -> (SfatModel<f32>, ContextEncoding<f32>, Tensor<f32>) {
        let model = SfatModel::<f32>::init(tiny(), 11).unwrap();
        let seq = TokenSequence { ids: vec![7, 8, 9, PAD_ID, PAD_ID, PAD_ID] };
        let ctx = encode_comments(&[seq], &[true], &model, Mode::Eval, &mut rng()).unwrap();
        let video = Tensor::constant(&[1, 8], (0..8).map(|i| (i as f32).sin()).collect()).unwrap();
        (model, ctx, video)
    }

    fn toy_vocab() -> Vocabulary {
        // 10 regular tokens on top of the 6 specials.
        let text = (0..10).map(|i| format!("w{i} w{i}")).collect::<Vec<_>>().join(" ");
        Vocabulary::build([text.as_str()], 2, 16).unwrap()
    }

    #[test]
    fn logits_shape_contract() {
        let (model, ctx, video) = fixture();
        let acts =
            decoder_forward(&[BOS_ID, 6, 7], &ctx, &video, &model, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(acts.logits.shape(), [3, 16]);
        assert_eq!(acts.embedded.shape(), [3, 8]);
    }

    #[test]
    fn causality_suffix_edits_leave_prefix_logits() {
        let (model, ctx, video) = fixture();
        let a = decoder_forward(&[BOS_ID, 6, 7, 8, 9], &ctx, &video, &model, Mode::Eval, &mut rng())
            .unwrap();
        let b = decoder_forward(&[BOS_ID, 6, 7, 8, 12], &ctx, &video, &model, Mode::Eval, &mut rng())
            .unwrap();
        let (da, db) = (a.logits.data(), b.logits.data());
        for i in 0..4 * 16 {
            assert!((da[i] - db[i]).abs() < 1e-6, "prefix logit {i} moved");
        }
        assert!(da[4 * 16..].iter().zip(&db[4 * 16..]).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn both_cross_attention_paths_are_live() {
        let (model, ctx, video) = fixture();
        let base =
            decoder_forward(&[BOS_ID, 6], &ctx, &video, &model, Mode::Eval, &mut rng()).unwrap();
        let zero_v = Tensor::constant(&[1, 8], vec![0.0; 8]).unwrap();
        let no_video =
            decoder_forward(&[BOS_ID, 6], &ctx, &zero_v, &model, Mode::Eval, &mut rng()).unwrap();
        let delta_v: f32 = base
            .logits
            .data()
            .iter()
            .zip(no_video.logits.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(delta_v > 0.0, "video path is dead");

        let seq = TokenSequence { ids: vec![12, 13, PAD_ID, PAD_ID, PAD_ID, PAD_ID] };
        let other_ctx =
            encode_comments(&[seq], &[true], &model, Mode::Eval, &mut rng()).unwrap();
        let no_ctx =
            decoder_forward(&[BOS_ID, 6], &other_ctx, &video, &model, Mode::Eval, &mut rng())
                .unwrap();
        let delta_c: f32 = base
            .logits
            .data()
            .iter()
            .zip(no_ctx.logits.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(delta_c > 0.0, "context path is dead");
    }

    #[test]
    fn head_softmax_normalizes() {
        let (model, ctx, video) = fixture();
        let acts =
            decoder_forward(&[BOS_ID, 6, 7], &ctx, &video, &model, Mode::Eval, &mut rng()).unwrap();
        for i in 0..3 {
            let row = &acts.logits.data()[i * 16..(i + 1) * 16];
            let p: f64 = row_log_probs(row).iter().map(|lp| lp.exp()).sum();
            assert!((p - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn greedy_is_deterministic_and_coherent_with_scoring() {
        let (model, ctx, video) = fixture();
        let vocab = toy_vocab();
        let a = generate(&ctx, &video, &model, &vocab, GenStrategy::Greedy, 5).unwrap();
        let b = generate(&ctx, &video, &model, &vocab, GenStrategy::Greedy, 5).unwrap();
        assert_eq!(a.token_ids, b.token_ids);
        assert_eq!(a.total_logprob, b.total_logprob);
        assert!(a.token_logprobs.iter().all(|lp| *lp <= 0.0));

        // score_candidate(un-normalized) of its own output matches the
        // accumulated log-prob when generation ended at EOS.
        let mut ids = vec![BOS_ID];
        ids.extend(&a.token_ids);
        let ended_at_eos = a.token_logprobs.len() == a.token_ids.len() + 1;
        if ended_at_eos {
            ids.push(EOS_ID);
        }
        let score = score_candidate(
            &TokenSequence { ids },
            &ctx,
            &video,
            &model,
            false,
        )
        .unwrap();
        assert!((score - a.total_logprob).abs() < 1e-9);
    }

    #[test]
    fn eos_biased_head_generates_empty_comment() {
        let (mut model, ctx, video) = fixture();
        let mut bias = vec![0.0f32; 16];
        bias[EOS_ID] = 50.0;
        model.params.insert("dec.head.b".into(), Tensor::leaf(&[1, 16], bias).unwrap());
        let out =
            generate(&ctx, &video, &model, &toy_vocab(), GenStrategy::Greedy, 5).unwrap();
        assert!(out.token_ids.is_empty());
        assert_eq!(out.text, "");
    }

    #[test]
    fn top_k_is_seed_deterministic() {
        let (model, ctx, video) = fixture();
        let vocab = toy_vocab();
        let s = GenStrategy::TopK { k: 3, seed: 21 };
        let a = generate(&ctx, &video, &model, &vocab, s, 6).unwrap();
        let b = generate(&ctx, &video, &model, &vocab, s, 6).unwrap();
        assert_eq!(a.token_ids, b.token_ids);
    }

    #[test]
    fn normalized_score_divides_by_token_count() {
        let (model, ctx, video) = fixture();
        let cand = TokenSequence { ids: vec![BOS_ID, 7, 9, EOS_ID, PAD_ID, PAD_ID] };
        let raw = score_candidate(&cand, &ctx, &video, &model, false).unwrap();
        let norm = score_candidate(&cand, &ctx, &video, &model, true).unwrap();
        assert!((norm - raw / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_score_matches_per_token_recomputation() {
        let (model, ctx, video) = fixture();
        let cand = TokenSequence { ids: vec![BOS_ID, 7, 9] };
        let score = score_candidate(&cand, &ctx, &video, &model, false).unwrap();
        let acts =
            decoder_forward(&[BOS_ID, 7], &ctx, &video, &model, Mode::Eval, &mut rng()).unwrap();
        let lp0 = row_log_probs(&acts.logits.data()[..16])[7];
        let lp1 = row_log_probs(&acts.logits.data()[16..32])[9];
        assert!((score - (lp0 + lp1)).abs() < 1e-9);
    }

    #[test]
    fn empty_candidate_is_a_scoring_error() {
        let (model, ctx, video) = fixture();
        let cand = TokenSequence { ids: vec![BOS_ID, PAD_ID, PAD_ID] };
        assert!(matches!(
            score_candidate(&cand, &ctx, &video, &model, true),
            Err(ModelError::Scoring(_))
        ));
    }

    #[test]
    fn zero_max_len_rejected() {
        let (model, ctx, video) = fixture();
        assert!(matches!(
            generate(&ctx, &video, &model, &toy_vocab(), GenStrategy::Greedy, 0),
            Err(ModelError::Parameter(_))
        ));
    }
}
