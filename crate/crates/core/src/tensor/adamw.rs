use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<T: Real>(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            step: 0,
            first: params.tensors().map(|t| vec![0.0; t.numel()]).collect(),
            second: params.tensors().map(|t| vec![0.0; t.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update using each parameter's accumulated `grad`;
    /// parameters without a gradient are treated as having a zero gradient.
    pub fn step<T: Real>(&mut self, params: &mut ParamStore<T>, lr: f64) {
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        for ((p, m), v) in params.tensors_mut().zip(&mut self.first).zip(&mut self.second) {
            debug_assert_eq!(p.numel(), m.len());
            let grad = p.grad.take();
            for (i, value) in p.values_mut().iter_mut().enumerate() {
                let g = grad.as_ref().map_or(0.0, |g| g[i].to_f64());
                let mut x = value.to_f64();
                x -= lr * weight_decay * x;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                x -= lr * m_hat / (libm::sqrt(v_hat) + eps);
                *value = T::from_f64(x);
            }
        }
    }
}
