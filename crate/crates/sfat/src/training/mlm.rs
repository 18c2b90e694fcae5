//! Stage one: masked-language-model pretraining of the text encoder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, TokenSequence, Vocabulary, CLS_ID, EOS_ID, MASK_ID, PAD_ID};
use crate::model::encoders::{transformer_layer, Mode};
use crate::model::SfatModel;
use crate::numerics::{backward, AttentionSpec, Real, Tensor};

use super::optim::Adam;
use super::trainer::{derived_rng, write_loss_csv, LossPoint, TrainingConfig};
use super::{Result, TrainingError};

/// Replace each non-special token by MASK independently with
/// probability `p`; when the draw masks nothing, one maskable position
/// is forced so every sequence contributes gradient.
pub fn mask_for_mlm(
    sequence: &TokenSequence,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenSequence, Vec<usize>)> {
    let maskable: Vec<usize> = sequence
        .ids
        .iter()
        .enumerate()
        .filter(|(_, id)| **id > EOS_ID)
        .map(|(i, _)| i)
        .collect();
    if maskable.is_empty() {
        return Err(TrainingError::Contract(
            "sequence has no maskable (non-special) tokens".into(),
        ));
    }
    let mut ids = sequence.ids.clone();
    let mut positions = Vec::new();
    for &i in &maskable {
        if rng.gen::<f64>() < p {
            ids[i] = MASK_ID;
            positions.push(i);
        }
    }
    if positions.is_empty() {
        let i = maskable[rng.gen_range(0..maskable.len())];
        ids[i] = MASK_ID;
        positions.push(i);
    }
    Ok((TokenSequence { ids }, positions))
}

/// Text-encoder forward over a CLS-prefixed masked sequence, projected
/// through the MLM head: logits `[len+1, vocab]` (row 0 is CLS).
fn mlm_logits<F: Real>(
    masked: &TokenSequence,
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<F>> {
    let cfg = &model.config;
    let mut ids = Vec::with_capacity(masked.ids.len() + 1);
    ids.push(CLS_ID);
    ids.extend_from_slice(&masked.ids);
    let key_valid: Vec<bool> =
        ids.iter().enumerate().map(|(i, id)| i == 0 || *id != PAD_ID).collect();
    let positions: Vec<usize> = (0..ids.len()).collect();
    let mut x = model
        .get("emb.word")?
        .gather_rows(&ids)?
        .add(&model.get("emb.pos_ctx")?.gather_rows(&positions)?)?;
    let spec = AttentionSpec {
        num_heads: cfg.heads,
        model_dim: cfg.d_t,
        causal: false,
        dropout_rate: cfg.dropout,
    };
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
    x.matmul(model.get("mlm.head.w")?)?
        .add_row(model.get("mlm.head.b")?)
        .map_err(Into::into)
}

/// Cross-entropy at masked positions only (all others ignored).
fn mlm_loss<F: Real>(
    original: &TokenSequence,
    masked: &TokenSequence,
    positions: &[usize],
    model: &SfatModel<F>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<F>> {
    let logits = mlm_logits(masked, model, mode, rng)?;
    // Row 0 is CLS; sequence position i sits at row i+1.
    let mut targets = vec![PAD_ID; masked.ids.len() + 1];
    for &i in positions {
        targets[i + 1] = original.ids[i];
    }
    logits.cross_entropy(&targets, PAD_ID).map_err(Into::into)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub loss_curve: Vec<LossPoint>,
    /// Masked-token accuracy measured after the last epoch.
    pub final_accuracy: f64,
}

/// Fraction of masked tokens the current model recovers, over one
/// deterministic masking pass of the whole corpus.
pub fn mlm_accuracy(
    model: &SfatModel<f32>,
    sequences: &[TokenSequence],
    mask_prob: f64,
    seed: u64,
) -> Result<f64> {
    let frozen = model.frozen();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
    let (mut hit, mut total) = (0usize, 0usize);
    for seq in sequences {
        let (masked, positions) = mask_for_mlm(seq, mask_prob, &mut rng)?;
        let logits = mlm_logits(&masked, &frozen, Mode::Eval, &mut fwd_rng)?;
        let v = frozen.config.vocab_size;
        for &i in &positions {
            let row = &logits.data()[(i + 1) * v..(i + 2) * v];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            hit += usize::from(argmax == seq.ids[i]);
            total += 1;
        }
    }
    if total == 0 {
        return Err(TrainingError::Data("no masked positions to measure".into()));
    }
    Ok(hit as f64 / total as f64)
}

/// Stage-one loop over all corpus comments. Sequences with no maskable
/// token are dropped up front.
pub fn pretrain(
    model: &mut SfatModel<f32>,
    adam: &mut Adam<f32>,
    texts: &[String],
    vocab: &Vocabulary,
    config: &TrainingConfig,
) -> Result<PretrainOutcome> {
    config.validate()?;
    let sequences: Vec<TokenSequence> = texts
        .iter()
        .map(|t| tokenize(t, vocab, model.config.p_c))
        .filter(|s| s.ids.iter().any(|id| *id > EOS_ID))
        .collect();
    if sequences.is_empty() {
        return Err(TrainingError::Data("no pretraining sequences with maskable tokens".into()));
    }
    let mut loss_curve = Vec::new();
    for epoch in 0..config.pretrain_epochs {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.shuffle(&mut derived_rng(config.seed, epoch, "mlm-shuffle"));
        let mut mask_rng = derived_rng(config.seed, epoch, "mlm-mask");
        let mut dropout_rng = derived_rng(config.seed, epoch, "mlm-dropout");
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut losses = Vec::with_capacity(batch.len());
            for &si in batch {
                let seq = &sequences[si];
                let (masked, positions) = mask_for_mlm(seq, config.mask_prob, &mut mask_rng)?;
                losses.push(mlm_loss(
                    seq,
                    &masked,
                    &positions,
                    model,
                    Mode::Train,
                    &mut dropout_rng,
                )?);
            }
            let mut total = losses[0].clone();
            for l in &losses[1..] {
                total = total.add(l)?;
            }
            let loss = total.scale(1.0f32 / losses.len() as f32);
            let value = loss.item()? as f64;
            if !value.is_finite() {
                return Err(TrainingError::NanLoss { epoch, batch: step });
            }
            backward(&loss)?;
            adam.step(&mut model.params)?;
            loss_curve.push(LossPoint { epoch, step, loss: value });
        }
    }
    let final_accuracy = mlm_accuracy(model, &sequences, config.mask_prob, config.seed)?;
    Ok(PretrainOutcome { loss_curve, final_accuracy })
}

/// Convenience: pretrain and drop the loss curve to a CSV file.
pub fn pretrain_with_log(
    model: &mut SfatModel<f32>,
    adam: &mut Adam<f32>,
    texts: &[String],
    vocab: &Vocabulary,
    config: &TrainingConfig,
    csv_path: &std::path::Path,
) -> Result<PretrainOutcome> {
    let out = pretrain(model, adam, texts, vocab, config)?;
    write_loss_csv(csv_path, &out.loss_curve)?;
    Ok(out)
}
