//! Adam with bias correction; parameters are rebuilt as fresh leaves on
//! every step, so gradient slots start empty for the next pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numerics::{Real, Tensor};

use super::{Result, TrainingError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    pub config: AdamConfig,
    pub step_count: u64,
    /// First/second moment estimates, keyed like the parameter map.
    pub m: BTreeMap<String, Vec<F>>,
    pub v: BTreeMap<String, Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate >= 0.0)
            || !(0.0..1.0).contains(&config.beta1)
            || !(0.0..1.0).contains(&config.beta2)
            || !(config.eps > 0.0)
        {
            return Err(TrainingError::Parameter(format!("invalid Adam config {config:?}")));
        }
        Ok(Adam { config, step_count: 0, m: BTreeMap::new(), v: BTreeMap::new() })
    }

    /// Apply one update using the gradients currently stored on the
    /// parameter leaves; parameters without gradients are left alone.
    pub fn step(&mut self, params: &mut BTreeMap<String, Tensor<F>>) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as f64;
        let c = self.config;
        let (b1, b2) = (F::from_f64(c.beta1).unwrap(), F::from_f64(c.beta2).unwrap());
        let bc1 = F::from_f64(1.0 - c.beta1.powf(t)).unwrap();
        let bc2 = F::from_f64(1.0 - c.beta2.powf(t)).unwrap();
        let lr = F::from_f64(c.learning_rate).unwrap();
        let eps = F::from_f64(c.eps).unwrap();
        let one = F::one();

        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad() else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![F::zero(); grad.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![F::zero(); grad.len()]);
            if m.len() != grad.len() {
                return Err(TrainingError::Contract(format!(
                    "moment size {} does not match gradient size {} for {name}",
                    m.len(),
                    grad.len()
                )));
            }
            let mut data = tensor.data().to_vec();
            for i in 0..grad.len() {
                m[i] = b1 * m[i] + (one - b1) * grad[i];
                v[i] = b2 * v[i] + (one - b2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
            }
            *tensor = Tensor::leaf(tensor.shape(), data)?;
        }
        Ok(())
    }
}
