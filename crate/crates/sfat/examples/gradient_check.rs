//! Check analytic gradients of a small attention block against central
//! finite differences in f64.
//!
//! Run with: cargo run --example gradient_check

use std::collections::BTreeMap;

use sfat::numerics::{
    finite_difference_check, multi_head_attention, AttentionParams, AttentionSpec, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let dim = 8;
    let rows = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut rand_mat = |name: &str, r: usize, c: usize| {
        let data: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-0.5..0.5)).collect();
        (name.to_string(), Tensor::leaf(&[r, c], data).unwrap())
    };

    let mut params: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
    for w in ["wq", "wk", "wv", "wo"] {
        let (k, v) = rand_mat(w, dim, dim);
        params.insert(k, v);
    }
    for b in ["bq", "bk", "bv", "bo"] {
        let (k, v) = rand_mat(b, 1, dim);
        params.insert(k, v);
    }
    let (k, v) = rand_mat("x", rows, dim);
    params.insert(k, v);

    let spec = AttentionSpec { num_heads: 2, model_dim: dim, causal: true, dropout_rate: 0.0 };
    let report = finite_difference_check(
        &params,
        |p| {
            let attn = AttentionParams {
                wq: p["wq"].clone(),
                wk: p["wk"].clone(),
                wv: p["wv"].clone(),
                wo: p["wo"].clone(),
                bq: p["bq"].clone(),
                bk: p["bk"].clone(),
                bv: p["bv"].clone(),
                bo: p["bo"].clone(),
            };
            let out = multi_head_attention(&p["x"], &p["x"], &p["x"], &attn, &spec, None, None)?;
            Ok(out.mul(&out)?.sum())
        },
        1e-5,
    )
    .expect("finite-difference check failed to run");

    println!("checked {} gradient entries", report.elements_checked);
    println!(
        "worst: {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}; tolerance 1e-4)",
        report.max_rel_err,
        report.worst_param,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
    assert!(report.passes(1e-4));
    println!("gradient check passed");
}
