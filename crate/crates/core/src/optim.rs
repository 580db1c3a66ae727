//! Adam with decoupled weight decay, global-norm clipping and a linear
//! learning-rate decay to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{is_decayed, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, clip_norm: Some(1.0) }
    }
}

/// `base_lr · (1 − step / total_steps)`, clamped at zero.
pub fn linear_decay(base_lr: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    base_lr * (1.0 - step as f64 / total_steps as f64).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: usize,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { step: 0, m: zeros(), v: zeros() }
    }

    /// Applies one update in place and returns the pre-clipping gradient norm.
    pub fn update(
        &mut self,
        params: &mut ModelParams<T>,
        grads: &[Vec<T>],
        lr: f64,
        cfg: &AdamConfig,
    ) -> Result<f64> {
        if grads.len() != params.tensors().len() {
            return Err(Error::Contract(format!(
                "got {} gradient buffers for {} parameters",
                grads.len(),
                params.tensors().len()
            )));
        }
        let norm = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|&x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt();
        let clip = match cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step_size = T::from_f64_lossy(lr / bc1);
        let bc2_sqrt = T::from_f64_lossy(bc2.sqrt());
        let eps = T::from_f64_lossy(cfg.eps);
        let clip = T::from_f64_lossy(clip);
        let names: Vec<String> = params.names().to_vec();
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let decay = if is_decayed(&names[i]) { T::from_f64_lossy(lr * cfg.weight_decay) } else { T::zero() };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let g = grads[i][j] * clip;
                m[j] = b1 * m[j] + one_b1 * g;
                v[j] = b2 * v[j] + one_b2 * g * g;
                let denom = v[j].sqrt() / bc2_sqrt + eps;
                *w = *w - decay * *w - step_size * m[j] / denom;
            }
        }
        Ok(norm)
    }
}
