use alloc::string::ToString;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with optional global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.clip_norm = Some(max_norm);
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates every parameter for which `trainable` returns true, using the
    /// gradients accumulated in `store`. Gradients are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, trainable: impl Fn(ParamId) -> bool) -> Result<()> {
        let ids: Vec<ParamId> = store.ids().filter(|id| trainable(*id)).collect();
        for id in &ids {
            if !store.grad(*id).is_finite() {
                return Err(Error::NonFiniteGradient {
                    name: store.name(*id).to_string(),
                });
            }
        }
        if self.first.len() < store.len() {
            for id in store.ids().skip(self.first.len()) {
                let [r, c] = store.value(id).shape();
                self.first.push(Tensor::zeros(r, c));
                self.second.push(Tensor::zeros(r, c));
            }
        }
        let mut factor = 1.0;
        if let Some(max) = self.clip_norm {
            let norm = libm::sqrt(ids.iter().map(|id| store.grad(*id).squared_norm()).sum::<f64>());
            if norm > max {
                factor = max / norm;
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        for id in ids {
            let i = id.index();
            let grad = store.grad(id).data().to_vec();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let w = store.value_mut(id).data_mut();
            for k in 0..grad.len() {
                let gk = grad[k] * factor;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                w[k] -= self.lr * (m[k] / c1) / (libm::sqrt(v[k] / c2) + self.eps);
            }
        }
        store.step += 1;
        Ok(())
    }
}
