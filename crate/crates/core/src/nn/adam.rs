use crate::error::{shape_err, Error, Result};
use crate::nn::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.params().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        Adam { config, first: zeros.clone(), second: zeros, step: 0 }
    }

    /// Applies one update. Any non-finite gradient aborts before touching state.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(shape_err!("{} gradients for {} parameters", grads.len(), store.len()));
        }
        for (e, g) in store.params().iter().zip(grads) {
            if e.value.shape() != g.shape() {
                return Err(shape_err!("gradient {:?} for parameter {} {:?}", g.shape(), e.name, e.value.shape()));
            }
            if !g.all_finite() {
                return Err(Error::Optimizer(format!("non-finite gradient for {}", e.name)));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, e) in store.params_mut().iter_mut().enumerate() {
            let (m, v) = (self.first[i].data_mut(), self.second[i].data_mut());
            for (k, (p, &g)) in e.value.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
