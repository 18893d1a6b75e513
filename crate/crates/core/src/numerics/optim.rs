use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::NumericsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; none when absent.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-4, betas: [0.95, 0.99], eps: 1e-8, weight_decay: 0.0, clip_norm: Some(1.0) }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        AdamW { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Global L2 norm of a gradient set.
    pub fn grad_norm(grads: &[Tensor<T>]) -> f64 {
        grads.iter().map(|g| g.norm_sq().f64()).sum::<f64>().sqrt()
    }

    /// Applies one update; returns the pre-clip gradient norm.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<f64, NumericsError> {
        if grads.len() != params.len() {
            return Err(NumericsError::Invalid(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        let norm = Self::grad_norm(grads);
        if !norm.is_finite() {
            return Err(NumericsError::NonFinite { op: "gradient" });
        }
        let clip = match self.config.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (c.betas[0], c.betas[1]);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let (tb1, tb2, tclip) = (T::of(b1), T::of(b2), T::of(clip));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.lr * c.weight_decay));
        let (sbc1, sbc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(ParamId(i));
            if g.shape() != p.shape() {
                return Err(NumericsError::Shape { op: "adamw", left: p.shape().to_vec(), right: g.shape().to_vec() });
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (w, &gr)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gr = gr * tclip;
                m[j] = tb1 * m[j] + (T::one() - tb1) * gr;
                v[j] = tb2 * v[j] + (T::one() - tb2) * gr * gr;
                let mh = m[j] * sbc1;
                let vh = v[j] * sbc2;
                *w -= lr * mh / (vh.sqrt() + eps) + wd * *w;
            }
        }
        Ok(norm)
    }
}
