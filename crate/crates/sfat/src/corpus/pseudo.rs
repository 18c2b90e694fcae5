//! Deterministic pseudo-embedder: a hash-seeded stand-in for CLIP text
//! and image embeddings so the pipeline runs without model weights.
//!
//! Bag-of-token construction: each token hashes to a fixed pseudo-random
//! unit direction, the text embeds as the normalized token average, so
//! texts sharing tokens land at correlated directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::vocab::normalize_tokens;
use super::{CorpusError, Result};

pub fn pseudo_embed(text: &str, dim: usize, seed: u64) -> Result<Vec<f32>> {
    if dim < 8 {
        return Err(CorpusError::Parameter(format!("embedding dim {dim} below the minimum of 8")));
    }
    let tokens = normalize_tokens(text);
    if tokens.is_empty() {
        return Err(CorpusError::EmptyText(text.to_string()));
    }
    let mut sum = vec![0.0f64; dim];
    for token in &tokens {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        for s in sum.iter_mut() {
            // Box-Muller for an isotropic direction.
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            *s += (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    Ok(sum.iter().map(|v| (*v / norm) as f32).collect())
}
