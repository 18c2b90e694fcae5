//! Scaled dot-product multi-head attention with optional causal and
//! key-padding masks.

use rand_chacha::ChaCha8Rng;

use super::tensor::{r, Real, Tensor};
use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy)]
pub struct AttentionSpec {
    pub num_heads: usize,
    pub model_dim: usize,
    pub causal: bool,
    pub dropout_rate: f64,
}

impl AttentionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.model_dim == 0 {
            return Err(NumericsError::Parameter(
                "attention heads and model dimension must be positive".into(),
            ));
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(NumericsError::Parameter(format!(
                "model dimension {} not divisible by {} heads",
                self.model_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NumericsError::Parameter(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Projection weights for one attention block.
pub struct AttentionParams<F: Real> {
    pub wq: Tensor<F>,
    pub bq: Tensor<F>,
    pub wk: Tensor<F>,
    pub bk: Tensor<F>,
    pub wv: Tensor<F>,
    pub bv: Tensor<F>,
    pub wo: Tensor<F>,
    pub bo: Tensor<F>,
}

const MASK_NEG: f64 = -1e9;

/// Multi-head attention: query `[q, d]` against key/value source `[s, d]`.
///
/// `key_valid`, when given, marks key positions that may be attended to;
/// invalid positions are masked out before the softmax. Dropout on the
/// attention weights is active only when `dropout` carries an RNG.
pub fn multi_head_attention<F: Real>(
    query: &Tensor<F>,
    key_source: &Tensor<F>,
    value_source: &Tensor<F>,
    params: &AttentionParams<F>,
    spec: &AttentionSpec,
    key_valid: Option<&[bool]>,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<F>> {
    spec.validate()?;
    let d = spec.model_dim;
    let (q_len, qd) = two_dims(query)?;
    let (s_len, kd) = two_dims(key_source)?;
    let (v_len, vd) = two_dims(value_source)?;
    if qd != d || kd != d || vd != d {
        return Err(NumericsError::Dimension(format!(
            "attention inputs of widths {qd}/{kd}/{vd} for model dimension {d}"
        )));
    }
    if s_len == 0 {
        return Err(NumericsError::Dimension("attention over zero key positions".into()));
    }
    if v_len != s_len {
        return Err(NumericsError::Dimension(format!(
            "key/value lengths {s_len} and {v_len} differ"
        )));
    }
    if let Some(valid) = key_valid {
        if valid.len() != s_len {
            return Err(NumericsError::Dimension(format!(
                "key mask of {} entries for {} positions",
                valid.len(),
                s_len
            )));
        }
        if valid.iter().all(|v| !v) {
            return Err(NumericsError::Contract("every key position is masked".into()));
        }
    }

    let q = query.matmul(&params.wq)?.add_row(&params.bq)?;
    let k = key_source.matmul(&params.wk)?.add_row(&params.bk)?;
    let v = value_source.matmul(&params.wv)?.add_row(&params.bv)?;

    let head_dim = d / spec.num_heads;
    let scale = r::<F>(1.0 / (head_dim as f64).sqrt());

    // One additive mask shared by all heads.
    let mut mask = vec![F::zero(); q_len * s_len];
    for i in 0..q_len {
        for j in 0..s_len {
            let mut blocked = false;
            if spec.causal && j > i {
                blocked = true;
            }
            if let Some(valid) = key_valid {
                if !valid[j] {
                    blocked = true;
                }
            }
            if blocked {
                mask[i * s_len + j] = r::<F>(MASK_NEG);
            }
        }
    }

    let mut rng = dropout;
    let mut heads = Vec::with_capacity(spec.num_heads);
    for h in 0..spec.num_heads {
        let qh = q.slice_cols(h * head_dim, (h + 1) * head_dim)?;
        let kh = k.slice_cols(h * head_dim, (h + 1) * head_dim)?;
        let vh = v.slice_cols(h * head_dim, (h + 1) * head_dim)?;
        let scores = qh.matmul(&kh.transpose()?)?.scale(scale).add_elem_const(&mask)?;
        let mut weights = scores.softmax_temp_rows(1.0)?;
        if let Some(rng) = rng.as_deref_mut() {
            weights = weights.dropout(spec.dropout_rate, rng)?;
        }
        heads.push(weights.matmul(&vh)?);
    }
    let ctx = Tensor::concat_cols(&heads)?;
    ctx.matmul(&params.wo)?.add_row(&params.bo)
}

fn two_dims<F: Real>(t: &Tensor<F>) -> Result<(usize, usize)> {
    match t.shape() {
        [n, d] => Ok((*n, *d)),
        s => Err(NumericsError::Dimension(format!("expected a 2-D tensor, got shape {s:?}"))),
    }
}
