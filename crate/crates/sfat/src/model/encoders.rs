//! The two modality encoders: a CLS-pooling comment transformer and a
//! frame transformer over precomputed joint embeddings.

use rand_chacha::ChaCha8Rng;

use crate::corpus::{TokenSequence, CLS_ID, PAD_ID};
use crate::numerics::{multi_head_attention, AttentionSpec, Real, Tensor};

use super::params::SfatModel;
use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Encoded context comments: row i is the CLS state of comment i; rows
/// with `mask[i] == false` are all-zero.
#[derive(Debug, Clone)]
pub struct ContextEncoding<F: Real> {
    /// `[n_c, d_t]`.
    pub c: Tensor<F>,
    pub mask: Vec<bool>,
}

/// One pre-norm transformer layer: attention and feed-forward sublayers,
/// each wrapped as `x + Sublayer(LayerNorm(x))`.
pub(crate) fn transformer_layer<F: Real>(
    x: &Tensor<F>,
    prefix: &str,
    model: &SfatModel<F>,
    spec: &AttentionSpec,
    key_valid: Option<&[bool]>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<F>> {
    let dropping = mode == Mode::Train && model.config.dropout > 0.0;
    let ln1 = x.layer_norm(
        model.get(&format!("{prefix}.ln1.g"))?,
        model.get(&format!("{prefix}.ln1.b"))?,
    )?;
    let attn = multi_head_attention(
        &ln1,
        &ln1,
        &ln1,
        &model.attention(&format!("{prefix}.attn"))?,
        spec,
        key_valid,
        if dropping { Some(rng) } else { None },
    )?;
    let x = x.add(&attn)?;

    let ln2 = x.layer_norm(
        model.get(&format!("{prefix}.ln2.g"))?,
        model.get(&format!("{prefix}.ln2.b"))?,
    )?;
    let mut h = ln2
        .matmul(model.get(&format!("{prefix}.ffn.w1"))?)?
        .add_row(model.get(&format!("{prefix}.ffn.b1"))?)?
        .relu();
    if dropping {
        h = h.dropout(model.config.dropout, rng)?;
    }
    let ffn = h
        .matmul(model.get(&format!("{prefix}.ffn.w2"))?)?
        .add_row(model.get(&format!("{prefix}.ffn.b2"))?)?;
    x.add(&ffn).map_err(Into::into)
}

/// Encode `n_c` tokenized context comments into CLS representations.
///
/// Each comment is prefixed with CLS, given word plus learned positional
/// embeddings, and run through the text encoder with padding positions
/// masked out of attention. Invalid (padding-only) slots produce
/// all-zero rows.
pub fn encode_comments<F: Real>(
    sequences: &[TokenSequence],
    mask: &[bool],
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<ContextEncoding<F>> {
    if sequences.is_empty() || sequences.len() != mask.len() {
        return Err(ModelError::Dimension(format!(
            "{} sequences against {} mask entries",
            sequences.len(),
            mask.len()
        )));
    }
    let cfg = &model.config;
    let spec = AttentionSpec {
        num_heads: cfg.heads,
        model_dim: cfg.d_t,
        causal: false,
        dropout_rate: cfg.dropout,
    };
    let word = model.get("emb.word")?;
    let pos = model.get("emb.pos_ctx")?;
    let mut rows = Vec::with_capacity(sequences.len());
    for (seq, valid) in sequences.iter().zip(mask) {
        if seq.ids.len() > cfg.p_c {
            return Err(ModelError::Contract(format!(
                "sequence of {} tokens exceeds the context budget p_c={}",
                seq.ids.len(),
                cfg.p_c
            )));
        }
        if !valid {
            rows.push(Tensor::zeros(&[1, cfg.d_t]));
            continue;
        }
        let mut ids = Vec::with_capacity(seq.ids.len() + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(&seq.ids);
        let key_valid: Vec<bool> =
            ids.iter().enumerate().map(|(i, id)| i == 0 || *id != PAD_ID).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let mut x = word.gather_rows(&ids)?.add(&pos.gather_rows(&positions)?)?;
        for l in 0..cfg.l_e {
            x = transformer_layer(
                &x,
                &format!("enc_txt.l{l}"),
                model,
                &spec,
                Some(&key_valid),
                mode,
                rng,
            )?;
        }
        let x = x.layer_norm(model.get("enc_txt.ln_f.g")?, model.get("enc_txt.ln_f.b")?)?;
        rows.push(x.gather_rows(&[0])?);
    }
    Ok(ContextEncoding { c: Tensor::concat_rows(&rows)?, mask: mask.to_vec() })
}

/// Encode a context window's frame rows (`t1` rows of the raw joint
/// embedding dimension) into the latent frame sequence `[t1, d_v]`.
pub fn encode_frames<F: Real>(
    frame_rows: &[f32],
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<F>> {
    let cfg = &model.config;
    if frame_rows.len() != cfg.t1 * cfg.input_embed_dim {
        return Err(ModelError::Dimension(format!(
            "{} frame floats for t1={} frames of dimension {}",
            frame_rows.len(),
            cfg.t1,
            cfg.input_embed_dim
        )));
    }
    let data: Vec<F> = frame_rows.iter().map(|v| F::from_f32(*v).unwrap()).collect();
    let input = Tensor::constant(&[cfg.t1, cfg.input_embed_dim], data)?;
    let mut x = input
        .matmul(model.get("enc_frm.in_proj.w")?)?
        .add_row(model.get("enc_frm.in_proj.b")?)?
        .add(model.get("emb.pos_frame")?)?;
    let spec = AttentionSpec {
        num_heads: cfg.heads,
        model_dim: cfg.d_v,
        causal: false,
        dropout_rate: cfg.dropout,
    };
    for l in 0..cfg.l_e {
        x = transformer_layer(&x, &format!("enc_frm.l{l}"), model, &spec, None, mode, rng)?;
    }
    x.layer_norm(model.get("enc_frm.ln_f.g")?, model.get("enc_frm.ln_f.b")?)
        .map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use rand::SeedableRng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            l_e: 2,
            l_d: 1,
            d_t: 8,
            d_v: 8,
            heads: 2,
            input_embed_dim: 12,
            t1: 4,
            n_c_train: 3,
            n_c_eval: 3,
            p_c: 6,
            p_r: 6,
            dropout: 0.0,
            epsilon: 0.1,
            vocab_size: 16,
        }
    }

    fn seq(ids: &[usize], p_c: usize) -> TokenSequence {
        let mut ids = ids.to_vec();
        ids.resize(p_c, PAD_ID);
        TokenSequence { ids }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn single_comment_shape() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let out =
            encode_comments(&[seq(&[7, 8], 6)], &[true], &m, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(out.c.shape(), [1, 8]);
    }

    #[test]
    fn identical_comments_identical_rows() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let s = seq(&[7, 8, 9], 6);
        let out =
            encode_comments(&[s.clone(), s], &[true, true], &m, Mode::Eval, &mut rng()).unwrap();
        let d = out.c.data();
        assert_eq!(d[..8], d[8..16]);
    }

    #[test]
    fn permuting_comments_permutes_rows() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let (a, b) = (seq(&[7, 8], 6), seq(&[9, 10, 11], 6));
        let ab = encode_comments(&[a.clone(), b.clone()], &[true, true], &m, Mode::Eval, &mut rng())
            .unwrap();
        let ba = encode_comments(&[b, a], &[true, true], &m, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(ab.c.data()[..8], ba.c.data()[8..16]);
        assert_eq!(ab.c.data()[8..16], ba.c.data()[..8]);
    }

    #[test]
    fn padded_slot_is_zero_and_isolated() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let a = seq(&[7, 8], 6);
        let with_pad = encode_comments(
            &[a.clone(), TokenSequence::padding_only(6)],
            &[true, false],
            &m,
            Mode::Eval,
            &mut rng(),
        )
        .unwrap();
        assert!(with_pad.c.data()[8..16].iter().all(|v| *v == 0.0));
        let with_other = encode_comments(
            &[a, seq(&[9], 6)],
            &[true, false],
            &m,
            Mode::Eval,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(with_pad.c.data()[..8], with_other.c.data()[..8]);
    }

    #[test]
    fn overlong_sequence_is_a_contract_error() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let s = TokenSequence { ids: vec![7; 7] };
        assert!(matches!(
            encode_comments(&[s], &[true], &m, Mode::Eval, &mut rng()),
            Err(ModelError::Contract(_))
        ));
    }

    #[test]
    fn frame_encoder_shapes_and_position_dependence() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let out = encode_frames(&vec![0.0; 4 * 12], &m, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(out.shape(), [4, 8]);
        assert!(out.data().iter().all(|v| v.is_finite()));
        // Zero inputs still yield position-dependent rows.
        let rows: Vec<&[f32]> = out.data().chunks(8).collect();
        assert_ne!(rows[0], rows[1]);
    }

    #[test]
    fn wrong_frame_dim_rejected() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        assert!(matches!(
            encode_frames(&vec![0.0; 4 * 11], &m, Mode::Eval, &mut rng()),
            Err(ModelError::Dimension(_))
        ));
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let m = SfatModel::<f32>::init(tiny(), 1).unwrap();
        let frames: Vec<f32> = (0..48).map(|i| (i as f32 * 0.37).sin()).collect();
        let a = encode_frames(&frames, &m, Mode::Eval, &mut rng()).unwrap();
        let b = encode_frames(&frames, &m, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
