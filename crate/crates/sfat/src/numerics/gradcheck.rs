//! Central finite-difference oracle for gradient verification.
//!
//! The oracle is independent of the backward pass: it re-evaluates the
//! loss at perturbed parameter values and compares slopes. Run in 64-bit
//! mode only; finite differences are unreliable in 32-bit.

use std::collections::BTreeMap;

use super::tensor::{backward, Tensor};
use super::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compare analytic gradients of `loss_fn` against central finite
/// differences with step `h`, over every element of every parameter.
///
/// Relative error uses a small floor so near-zero gradient pairs are not
/// dominated by finite-difference round-off.
pub fn finite_difference_check<L>(
    params: &BTreeMap<String, Tensor<f64>>,
    loss_fn: L,
    h: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&BTreeMap<String, Tensor<f64>>) -> Result<Tensor<f64>>,
{
    // Analytic pass.
    let loss = loss_fn(params)?;
    backward(&loss)?;
    let mut analytic: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (name, t) in params {
        analytic.insert(name, t.grad().unwrap_or_else(|| vec![0.0; t.numel()]));
    }

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        elements_checked: 0,
    };

    for (name, t) in params {
        let base = t.data().to_vec();
        let shape = t.shape().to_vec();
        for idx in 0..base.len() {
            let eval_at = |delta: f64| -> Result<f64> {
                let mut perturbed = base.clone();
                perturbed[idx] += delta;
                let mut map = params.clone();
                map.insert(name.clone(), Tensor::leaf(&shape, perturbed)?);
                loss_fn(&map)?.item()
            };
            let plus = eval_at(h)?;
            let minus = eval_at(-h)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[name.as_str()][idx];
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            let rel = (a - numeric).abs() / scale;
            report.elements_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::attention::{multi_head_attention, AttentionParams, AttentionSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect()
    }

    fn check_layer(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let d = 4;
        let mut params = BTreeMap::new();
        params.insert("x".to_string(), Tensor::leaf(&[n, d], randn(&mut rng, n * d, 0.8)).unwrap());
        params.insert("w".to_string(), Tensor::leaf(&[d, d], randn(&mut rng, d * d, 0.5)).unwrap());
        params.insert("g".to_string(), Tensor::leaf(&[d], randn(&mut rng, d, 0.3)).unwrap());
        params.insert("b".to_string(), Tensor::leaf(&[d], randn(&mut rng, d, 0.3)).unwrap());
        let case = seed % 6;
        let loss_fn = move |p: &BTreeMap<String, Tensor<f64>>| {
            let x = &p["x"];
            let w = &p["w"];
            let y = match case {
                0 => x.matmul(w)?,
                1 => x.matmul(w)?.relu(),
                2 => x.layer_norm(&p["g"], &p["b"])?,
                3 => x.softmax_temp_rows(0.7)?,
                4 => x.l2_normalize_rows()?.matmul(w)?,
                _ => {
                    let spec =
                        AttentionSpec { num_heads: 2, model_dim: d, causal: true, dropout_rate: 0.0 };
                    let ones = Tensor::constant(&[d], vec![0.0; d]).unwrap();
                    let ap = AttentionParams {
                        wq: w.clone(),
                        bq: ones.clone(),
                        wk: w.clone(),
                        bk: ones.clone(),
                        wv: w.clone(),
                        bv: ones.clone(),
                        wo: w.clone(),
                        bo: ones,
                    };
                    multi_head_attention(x, x, x, &ap, &spec, None, None)?
                }
            };
            // Square so the scalar reduction exercises nontrivial grads.
            Ok(y.mul(&y)?.sum())
        };
        finite_difference_check(&params, loss_fn, 1e-5).unwrap().max_rel_err
    }

    #[test]
    fn every_layer_type_passes_fd_check_over_many_seeds() {
        for seed in 0..24u64 {
            let err = check_layer(seed);
            assert!(err < 1e-4, "seed {seed}: max rel err {err}");
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut params = BTreeMap::new();
        params.insert(
            "logits".to_string(),
            Tensor::leaf(&[3, 5], randn(&mut rng, 15, 2.0)).unwrap(),
        );
        let loss_fn = |p: &BTreeMap<String, Tensor<f64>>| p["logits"].cross_entropy(&[1, 0, 4], 0);
        let report = finite_difference_check(&params, loss_fn, 1e-5).unwrap();
        assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
    }
}
