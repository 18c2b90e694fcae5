//! Similarity-weighted frame aggregation: collapse the latent frame
//! sequence into one video embedding aligned with the chat context via
//! a temperature softmax over frame-comment cosine similarities.

use crate::numerics::{Real, Tensor};

use super::params::SfatModel;
use super::{ModelError, Result};

#[derive(Debug, Clone)]
pub struct AggregationOutput<F: Real> {
    /// Frame weights `[1, t1]`, a probability vector.
    pub weights: Tensor<F>,
    /// Per-frame mean similarity over unmasked comments `[1, t1]`.
    pub frame_scores: Tensor<F>,
    /// Aggregated video embedding `[1, d_v]`.
    pub video: Tensor<F>,
}

/// Cosine similarity matrix `[t1, n_c]` between the latent frames and
/// the projected joint text embeddings of the context comments.
///
/// Masked comments still occupy columns; callers must exclude them via
/// the same mask downstream.
pub fn similarity_scores<F: Real>(
    frames: &Tensor<F>,
    joint_text: &[Vec<f32>],
    mask: &[bool],
    model: &SfatModel<F>,
) -> Result<Tensor<F>> {
    let cfg = &model.config;
    if joint_text.len() != mask.len() || joint_text.is_empty() {
        return Err(ModelError::Dimension(format!(
            "{} text rows against {} mask entries",
            joint_text.len(),
            mask.len()
        )));
    }
    if !mask.iter().any(|m| *m) {
        return Err(ModelError::Aggregation("every context comment is masked".into()));
    }
    let mut flat = Vec::with_capacity(joint_text.len() * cfg.input_embed_dim);
    for row in joint_text {
        if row.len() != cfg.input_embed_dim {
            return Err(ModelError::Dimension(format!(
                "joint text row of {} values for input dimension {}",
                row.len(),
                cfg.input_embed_dim
            )));
        }
        flat.extend(row.iter().map(|v| F::from_f32(*v).unwrap()));
    }
    let text = Tensor::constant(&[joint_text.len(), cfg.input_embed_dim], flat)?
        .matmul(model.get("agg.text_proj.w")?)?
        .add_row(model.get("agg.text_proj.b")?)?
        .l2_normalize_rows()?;
    let frames_n = frames.l2_normalize_rows()?;
    frames_n.matmul(&text.transpose()?).map_err(Into::into)
}

/// Collapse the frames into one video embedding.
///
/// Per-frame scores are the mean similarity over unmasked comments; the
/// weights are their temperature softmax (or exactly `1/t1` each under
/// the uniform ablation); the output is the weighted sum of the
/// L2-normalized frame rows. Gradients flow through the whole path.
pub fn aggregate<F: Real>(
    frames: &Tensor<F>,
    similarities: &Tensor<F>,
    mask: &[bool],
    epsilon: f64,
    uniform: bool,
) -> Result<AggregationOutput<F>> {
    if !(epsilon > 0.0) {
        return Err(ModelError::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let t1 = frames.shape()[0];
    if similarities.shape()[0] != t1 || similarities.shape()[1] != mask.len() {
        return Err(ModelError::Dimension(format!(
            "similarity shape {:?} against {t1} frames and {} comments",
            similarities.shape(),
            mask.len()
        )));
    }
    let valid = mask.iter().filter(|m| **m).count();
    if valid == 0 {
        return Err(ModelError::Aggregation("every context comment is masked".into()));
    }
    // Mean over unmasked comments as one matmul with a fixed column.
    let inv = F::from_f64(1.0 / valid as f64).unwrap();
    let col: Vec<F> = mask.iter().map(|m| if *m { inv } else { F::zero() }).collect();
    let reducer = Tensor::constant(&[mask.len(), 1], col)?;
    let frame_scores = similarities.matmul(&reducer)?.transpose()?;

    let weights = if uniform {
        let w = F::from_f64(1.0 / t1 as f64).unwrap();
        Tensor::constant(&[1, t1], vec![w; t1])?
    } else {
        frame_scores.softmax_temp_rows(epsilon)?
    };
    let video = weights.matmul(&frames.l2_normalize_rows()?)?;
    Ok(AggregationOutput { weights, frame_scores, video })
}
