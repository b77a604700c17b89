use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::nn::params::{Bound, BufferId, ParamId, ParamStore};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Lipschitz-bounded view of a weight: `lipschitz · W / σ̂(W)`, with `σ̂`
/// tracked by power iteration on `W` reshaped to `out × rest`.
#[derive(Clone, Debug)]
pub struct SpectralNorm {
    pub weight: ParamId,
    /// Persistent left singular vector estimate, unit norm.
    pub u: BufferId,
    pub lipschitz: f64,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn matrix_dims(w: &Tensor) -> (usize, usize) {
    let rows = w.shape()[0];
    (rows, w.len() / rows)
}

/// `v = normalize(Wᵀ u)`.
fn right_vector(w: &Tensor, u: &[f64]) -> Vec<f64> {
    let (rows, cols) = matrix_dims(w);
    let mut v = vec![0.0; cols];
    for r in 0..rows {
        let row = &w.data()[r * cols..(r + 1) * cols];
        v.iter_mut().zip(row).for_each(|(a, b)| *a += u[r] * b);
    }
    normalize(&mut v);
    v
}

impl SpectralNorm {
    pub fn new(store: &mut ParamStore, name: &str, weight: ParamId, lipschitz: f64) -> Self {
        let rows = store.get(weight).shape()[0];
        let mut rng = seeded(store.next_seed());
        let mut u: Vec<f64> = (0..rows).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut u);
        let u = store.add_buffer(format!("{name}.u"), Tensor::new(&[rows], u).expect("u shape"));
        SpectralNorm { weight, u, lipschitz }
    }

    /// Runs `iters` power-iteration steps, updating `u` in place.
    pub fn power_iterate(&self, store: &mut ParamStore, iters: usize) {
        let w = store.get(self.weight).clone();
        let (rows, cols) = matrix_dims(&w);
        let mut u = store.buffer(self.u).data().to_vec();
        for _ in 0..iters {
            let v = right_vector(&w, &u);
            let mut next = vec![0.0; rows];
            for (r, n) in next.iter_mut().enumerate() {
                *n = w.data()[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            if normalize(&mut next) > 0.0 {
                u = next;
            }
        }
        store.buffer_mut(self.u).data_mut().copy_from_slice(&u);
    }

    /// Current estimate `σ̂ = uᵀ W v` with `v = normalize(Wᵀu)`.
    pub fn sigma_estimate(&self, store: &ParamStore) -> f64 {
        let w = store.get(self.weight);
        let u = store.buffer(self.u).data();
        let v = right_vector(w, u);
        let (rows, cols) = matrix_dims(w);
        (0..rows)
            .map(|r| u[r] * w.data()[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Records the normalized weight using the current `u`, without iterating.
    pub fn effective(&self, g: &mut Graph, p: &Bound, store: &ParamStore) -> Result<Var> {
        let wv = p.var(self.weight);
        let u = store.buffer(self.u).data().to_vec();
        let v = right_vector(g.value(wv), &u);
        g.spectral_scale(wv, u, v, self.lipschitz)
    }

    /// Power-iterates, then records the normalized weight.
    pub fn normalize(&self, g: &mut Graph, p: &Bound, store: &mut ParamStore, power_iters: usize) -> Result<Var> {
        self.power_iterate(store, power_iters);
        self.effective(g, p, store)
    }
}
