//! Learnable parameters: construction, initialization and lookup.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{AttentionParams, Real, Tensor};

use super::config::ModelConfig;
use super::{ModelError, Result};

/// All learnable parameters plus the architecture config, keyed by a
/// stable dotted path with deterministic (lexicographic) iteration.
#[derive(Debug, Clone)]
pub struct SfatModel<F: Real> {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor<F>>,
}

/// FFN hidden width multiplier.
const FFN_MULT: usize = 4;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Shapes of every parameter implied by a config, in creation order.
fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, rows: usize, cols: usize, init: Init| {
        out.push((name, rows, cols, init));
    };

    push("emb.word".into(), cfg.vocab_size, cfg.d_t, Init::Gaussian);
    // Context positions include the prepended CLS slot.
    push("emb.pos_ctx".into(), cfg.p_c + 1, cfg.d_t, Init::Gaussian);
    push("emb.pos_dec".into(), cfg.p_r, cfg.d_t, Init::Gaussian);
    push("emb.pos_frame".into(), cfg.t1, cfg.d_v, Init::Gaussian);

    // Square input-side projections start at the identity so the latent
    // frame space initially coincides with the embedding space and the
    // aggregation's cosine signal is meaningful from step one.
    let in_proj = if cfg.input_embed_dim == cfg.d_v { Init::Identity } else { Init::Glorot };
    push("enc_frm.in_proj.w".into(), cfg.input_embed_dim, cfg.d_v, in_proj);
    push("enc_frm.in_proj.b".into(), 1, cfg.d_v, Init::Zero);

    // Residual branch outputs (attention wo, FFN w2) start near zero so
    // every block is close to the identity at init (GPT-2-style scaled
    // init); signal then propagates cleanly through deep stacks.
    let encoder_layer = |prefix: String, d: usize, push: &mut dyn FnMut(String, usize, usize, Init)| {
        for w in ["wq", "wk", "wv"] {
            push(format!("{prefix}.attn.{w}"), d, d, Init::Glorot);
        }
        push(format!("{prefix}.attn.wo"), d, d, Init::Gaussian);
        for b in ["bq", "bk", "bv", "bo"] {
            push(format!("{prefix}.attn.{b}"), 1, d, Init::Zero);
        }
        push(format!("{prefix}.ln1.g"), 1, d, Init::One);
        push(format!("{prefix}.ln1.b"), 1, d, Init::Zero);
        push(format!("{prefix}.ffn.w1"), d, FFN_MULT * d, Init::Glorot);
        push(format!("{prefix}.ffn.b1"), 1, FFN_MULT * d, Init::Zero);
        push(format!("{prefix}.ffn.w2"), FFN_MULT * d, d, Init::Gaussian);
        push(format!("{prefix}.ffn.b2"), 1, d, Init::Zero);
        push(format!("{prefix}.ln2.g"), 1, d, Init::One);
        push(format!("{prefix}.ln2.b"), 1, d, Init::Zero);
    };

    for i in 0..cfg.l_e {
        encoder_layer(format!("enc_txt.l{i}"), cfg.d_t, &mut push);
        encoder_layer(format!("enc_frm.l{i}"), cfg.d_v, &mut push);
    }
    push("enc_txt.ln_f.g".into(), 1, cfg.d_t, Init::One);
    push("enc_txt.ln_f.b".into(), 1, cfg.d_t, Init::Zero);
    push("enc_frm.ln_f.g".into(), 1, cfg.d_v, Init::One);
    push("enc_frm.ln_f.b".into(), 1, cfg.d_v, Init::Zero);

    // Joint-text projection into the latent frame space.
    push("agg.text_proj.w".into(), cfg.input_embed_dim, cfg.d_v, in_proj);
    push("agg.text_proj.b".into(), 1, cfg.d_v, Init::Zero);

    for i in 0..cfg.l_d {
        let d = cfg.d_t;
        for (block, ln) in [("sa", "ln1"), ("ca_c", "ln2"), ("ca_v", "ln3")] {
            for w in ["wq", "wk", "wv"] {
                push(format!("dec.l{i}.{block}.{w}"), d, d, Init::Glorot);
            }
            push(format!("dec.l{i}.{block}.wo"), d, d, Init::Gaussian);
            for b in ["bq", "bk", "bv", "bo"] {
                push(format!("dec.l{i}.{block}.{b}"), 1, d, Init::Zero);
            }
            push(format!("dec.l{i}.{ln}.g"), 1, d, Init::One);
            push(format!("dec.l{i}.{ln}.b"), 1, d, Init::Zero);
        }
        push(format!("dec.l{i}.ffn.w1"), d, FFN_MULT * d, Init::Glorot);
        push(format!("dec.l{i}.ffn.b1"), 1, FFN_MULT * d, Init::Zero);
        push(format!("dec.l{i}.ffn.w2"), FFN_MULT * d, d, Init::Gaussian);
        push(format!("dec.l{i}.ffn.b2"), 1, d, Init::Zero);
        push(format!("dec.l{i}.ln4.g"), 1, d, Init::One);
        push(format!("dec.l{i}.ln4.b"), 1, d, Init::Zero);
    }
    push("dec.ln_f.g".into(), 1, cfg.d_t, Init::One);
    push("dec.ln_f.b".into(), 1, cfg.d_t, Init::Zero);
    // Output heads start near zero so a fresh model predicts close to
    // uniform (initial loss ≈ ln of the vocabulary size).
    push("dec.head.w".into(), cfg.d_t, cfg.vocab_size, Init::Gaussian);
    push("dec.head.b".into(), 1, cfg.vocab_size, Init::Zero);
    if cfg.d_v != cfg.d_t {
        push("dec.v_bridge.w".into(), cfg.d_v, cfg.d_t, Init::Glorot);
        push("dec.v_bridge.b".into(), 1, cfg.d_t, Init::Zero);
    }

    // MLM head used only during pretraining.
    push("mlm.head.w".into(), cfg.d_t, cfg.vocab_size, Init::Gaussian);
    push("mlm.head.b".into(), 1, cfg.vocab_size, Init::Zero);

    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Scaled uniform (Glorot) for projection matrices.
    Glorot,
    /// N(0, 0.02) for embedding tables and residual branch outputs.
    Gaussian,
    /// Identity matrix for square near-no-op projections.
    Identity,
    Zero,
    One,
}

fn init_values<F: Real>(rows: usize, cols: usize, init: Init, rng: &mut ChaCha8Rng) -> Vec<F> {
    let n = rows * cols;
    match init {
        Init::Zero => vec![F::zero(); n],
        Init::One => vec![F::one(); n],
        Init::Identity => (0..n)
            .map(|i| if i / cols == i % cols { F::one() } else { F::zero() })
            .collect(),
        Init::Glorot => {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            (0..n).map(|_| F::from_f64(rng.gen_range(-limit..limit)).unwrap()).collect()
        }
        Init::Gaussian => (0..n)
            .map(|_| {
                // Box-Muller.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                F::from_f64(0.02 * z).unwrap()
            })
            .collect(),
    }
}

impl<F: Real> SfatModel<F> {
    /// Build a freshly initialized model. Each parameter draws from its
    /// own RNG stream derived from (seed, name), so initialization is
    /// independent of creation order.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = BTreeMap::new();
        for (name, rows, cols, init) in parameter_shapes(&config) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
            let data = init_values::<F>(rows, cols, init, &mut rng);
            params.insert(name, Tensor::leaf(&[rows, cols], data)?);
        }
        Ok(SfatModel { config, params })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>> {
        self.params
            .get(name)
            .ok_or_else(|| ModelError::Contract(format!("unknown parameter {name}")))
    }

    pub fn attention(&self, prefix: &str) -> Result<AttentionParams<F>> {
        Ok(AttentionParams {
            wq: self.get(&format!("{prefix}.wq"))?.clone(),
            bq: self.get(&format!("{prefix}.bq"))?.clone(),
            wk: self.get(&format!("{prefix}.wk"))?.clone(),
            bk: self.get(&format!("{prefix}.bk"))?.clone(),
            wv: self.get(&format!("{prefix}.wv"))?.clone(),
            bv: self.get(&format!("{prefix}.bv"))?.clone(),
            wo: self.get(&format!("{prefix}.wo"))?.clone(),
            bo: self.get(&format!("{prefix}.bo"))?.clone(),
        })
    }

    /// A copy whose parameters are untracked constants: forwards on it
    /// build no backward graph. Used for evaluation and generation.
    pub fn frozen(&self) -> Self {
        let params = self
            .params
            .iter()
            .map(|(k, t)| {
                (k.clone(), Tensor::constant(t.shape(), t.data().to_vec()).expect("same shape"))
            })
            .collect();
        SfatModel { config: self.config.clone(), params }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            l_e: 1,
            l_d: 1,
            d_t: 8,
            d_v: 8,
            heads: 2,
            input_embed_dim: 12,
            t1: 4,
            n_c_train: 2,
            n_c_eval: 3,
            p_c: 6,
            p_r: 6,
            dropout: 0.0,
            epsilon: 0.1,
            vocab_size: 16,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = SfatModel::<f32>::init(tiny(), 3).unwrap();
        let b = SfatModel::<f32>::init(tiny(), 3).unwrap();
        for (k, t) in &a.params {
            assert_eq!(t.data(), b.params[k].data(), "{k} differs");
        }
        let c = SfatModel::<f32>::init(tiny(), 4).unwrap();
        assert_ne!(a.params["emb.word"].data(), c.params["emb.word"].data());
    }

    #[test]
    fn layer_norm_gains_start_at_one() {
        let m = SfatModel::<f32>::init(tiny(), 0).unwrap();
        assert!(m.params["enc_txt.l0.ln1.g"].data().iter().all(|v| *v == 1.0));
        assert!(m.params["dec.l0.ln4.b"].data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bridge_exists_only_when_dims_differ() {
        let m = SfatModel::<f32>::init(tiny(), 0).unwrap();
        assert!(!m.params.contains_key("dec.v_bridge.w"));
        let cfg = ModelConfig { d_v: 4, heads: 2, ..tiny() };
        let m = SfatModel::<f32>::init(cfg, 0).unwrap();
        assert!(m.params.contains_key("dec.v_bridge.w"));
    }

    #[test]
    fn frozen_copies_are_untracked() {
        let m = SfatModel::<f32>::init(tiny(), 0).unwrap();
        let f = m.frozen();
        assert!(m.params["emb.word"].tracked());
        assert!(!f.params["emb.word"].tracked());
        assert_eq!(m.params["emb.word"].data(), f.params["emb.word"].data());
    }
}
