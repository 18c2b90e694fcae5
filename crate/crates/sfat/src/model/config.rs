use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Architecture hyperparameters. Defaults: 4 layers, 8 heads, 256
/// hidden dimensions, 512-dim joint input embeddings, 5 context
/// comments in training and 15 in evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder layers (shared count for both modality encoders).
    pub l_e: usize,
    /// Decoder layers.
    pub l_d: usize,
    /// Text hidden size.
    pub d_t: usize,
    /// Video hidden size.
    pub d_v: usize,
    pub heads: usize,
    /// Dimension of the precomputed joint frame/text embeddings.
    pub input_embed_dim: usize,
    /// Frames per context window (1 fps, so also its length in seconds).
    pub t1: usize,
    pub n_c_train: usize,
    pub n_c_eval: usize,
    /// Context-comment token budget.
    pub p_c: usize,
    /// Response token budget.
    pub p_r: usize,
    pub dropout: f64,
    /// Aggregation softmax temperature.
    pub epsilon: f64,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            l_e: 4,
            l_d: 4,
            d_t: 256,
            d_v: 256,
            heads: 8,
            input_embed_dim: 512,
            t1: 20,
            n_c_train: 5,
            n_c_eval: 15,
            p_c: 20,
            p_r: 20,
            dropout: 0.1,
            epsilon: 0.1,
            vocab_size: 20_000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_e", self.l_e),
            ("l_d", self.l_d),
            ("d_t", self.d_t),
            ("d_v", self.d_v),
            ("heads", self.heads),
            ("input_embed_dim", self.input_embed_dim),
            ("t1", self.t1),
            ("n_c_train", self.n_c_train),
            ("n_c_eval", self.n_c_eval),
            ("p_c", self.p_c),
            ("p_r", self.p_r),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Parameter(format!("{name} must be positive")));
            }
        }
        if self.d_t % self.heads != 0 || self.d_v % self.heads != 0 {
            return Err(ModelError::Parameter(format!(
                "d_t={} and d_v={} must be divisible by heads={}",
                self.d_t, self.d_v, self.heads
            )));
        }
        if !(self.dropout >= 0.0 && self.dropout < 1.0) {
            return Err(ModelError::Parameter(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(ModelError::Parameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.p_r < 3 {
            return Err(ModelError::Parameter(
                "p_r must be at least 3 to fit BOS, one token and EOS".into(),
            ));
        }
        Ok(())
    }
}
