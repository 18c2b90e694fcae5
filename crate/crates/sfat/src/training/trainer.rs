//! End-to-end comment-generation training: teacher forcing against a
//! uniformly selected response comment per window.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize_response, ClipWindow, CommentRecord, Corpus, Vocabulary, PAD_ID};
use crate::model::{decoder_forward, encode_window, Mode, SfatModel};
use crate::numerics::{backward, Tensor};

use super::checkpoint::save_checkpoint;
use super::optim::{Adam, AdamConfig};
use super::{Result, TrainingError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    /// MLM mask probability p.
    pub mask_prob: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
    /// Save every N epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Kept for config-file clarity: this build is always
    /// device-independent deterministic.
    pub deterministic: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-4,
            batch_size: 32,
            pretrain_epochs: 100,
            train_epochs: 200,
            mask_prob: 0.15,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_dir: None,
            checkpoint_every: 0,
            deterministic: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(TrainingError::Parameter("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainingError::Parameter("batch_size must be positive".into()));
        }
        if !(self.mask_prob > 0.0 && self.mask_prob <= 1.0) {
            return Err(TrainingError::Parameter(format!(
                "mask_prob must lie in (0, 1], got {}",
                self.mask_prob
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

pub fn write_loss_csv(path: &Path, points: &[LossPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,step,loss")?;
    for p in points {
        writeln!(w, "{},{},{}", p.epoch, p.step, p.loss)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub loss_curve: Vec<LossPoint>,
    /// Windows skipped for lacking context or response comments.
    pub skipped_windows: usize,
    pub final_epoch: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Seed stream for a (seed, epoch, label) triple.
pub(crate) fn derived_rng(seed: u64, epoch: usize, label: &str) -> ChaCha8Rng {
    let mix = seed
        ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ fnv1a(label.as_bytes());
    ChaCha8Rng::seed_from_u64(mix)
}

/// Uniform choice among the window's response comments, deterministic
/// given (window id, epoch, seed). `None` when the window has none.
pub fn select_target(window: &ClipWindow, epoch: usize, seed: u64) -> Option<&CommentRecord> {
    if window.response_comments.is_empty() {
        return None;
    }
    let mut rng = derived_rng(seed ^ fnv1a(window.id().as_bytes()), epoch, "target");
    let idx = rng.gen_range(0..window.response_comments.len());
    Some(&window.response_comments[idx])
}

/// Teacher-forced cross-entropy for one window against its selected
/// target; `None` when the window is unusable.
fn window_loss(
    window: &ClipWindow,
    target: &CommentRecord,
    model: &SfatModel<f32>,
    corpus: &Corpus,
    vocab: &Vocabulary,
    uniform_aggregation: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f32>> {
    let enc = encode_window(
        window,
        corpus,
        vocab,
        model.config.n_c_train,
        model,
        Mode::Train,
        rng,
        uniform_aggregation,
    )?;
    let response = tokenize_response(&target.text, vocab, model.config.p_r)?;
    let len = response.non_pad_len();
    // Inputs are BOS..last-1; position i predicts ids[i+1].
    let inputs = &response.ids[..len - 1];
    let targets = &response.ids[1..len];
    let acts = decoder_forward(
        inputs,
        &enc.context,
        &enc.aggregation.video,
        model,
        Mode::Train,
        rng,
    )?;
    acts.logits.cross_entropy(targets, PAD_ID).map_err(Into::into)
}

/// Stage-two training loop. `start_epoch` supports resuming from a
/// checkpoint; a fresh run passes 0.
pub fn train(
    model: &mut SfatModel<f32>,
    adam: &mut Adam<f32>,
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &TrainingConfig,
    uniform_aggregation: bool,
    start_epoch: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    let usable: Vec<&ClipWindow> = corpus.trainable_windows();
    let skipped_windows = corpus.windows.len() - usable.len();
    if usable.is_empty() {
        return Err(TrainingError::Data(
            "no windows with both context and response comments".into(),
        ));
    }
    let mut loss_curve = Vec::new();
    for epoch in start_epoch..config.train_epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut derived_rng(config.seed, epoch, "shuffle"));
        let mut dropout_rng = derived_rng(config.seed, epoch, "dropout");
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut losses = Vec::with_capacity(batch.len());
            for &wi in batch {
                let window = usable[wi];
                let target = select_target(window, epoch, config.seed)
                    .expect("trainable windows have responses");
                losses.push(window_loss(
                    window,
                    target,
                    model,
                    corpus,
                    vocab,
                    uniform_aggregation,
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
        if let Some(dir) = &config.checkpoint_dir {
            let due = config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
            if due || epoch + 1 == config.train_epochs {
                save_checkpoint(dir, model, Some(adam), epoch + 1, config)?;
            }
        }
    }
    Ok(TrainOutcome { loss_curve, skipped_windows, final_epoch: config.train_epochs })
}
