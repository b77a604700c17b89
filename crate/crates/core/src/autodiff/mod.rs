//! Reverse-mode differentiation over a recorded tape of tensor operations.

mod graph;
pub(crate) mod kernels;

pub use graph::{sigmoid, Axis, BackwardStats, Binary, Graph, Reduce, Unary, Var};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients of `build` against central differences.
///
/// `build` records a scalar function of the given inputs on a fresh graph.
/// Returns the worst relative error `‖a − n‖ / max(‖a‖, ‖n‖, 1e-8)` over the
/// inputs, each compared as a whole tensor. A per-coordinate ratio is not
/// usable: coordinates whose exact gradient is zero (cancelling subgradients,
/// zero-padded taps) or tiny get finite-difference estimates that are pure
/// rounding noise.
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        if !g.value(out).is_scalar() {
            return Err(shape_err!("grad_check needs a scalar output"));
        }
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let (mut diff, mut a_norm, mut n_norm) = (0.0, 0.0, 0.0);
        for k in 0..input.len() {
            let orig = input.data()[k];
            probe[which].data_mut()[k] = orig + eps;
            let plus = eval(&probe)?;
            probe[which].data_mut()[k] = orig - eps;
            let minus = eval(&probe)?;
            probe[which].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[which].data()[k];
            diff += (a - numeric).powi(2);
            a_norm += a * a;
            n_norm += numeric * numeric;
        }
        let rel = diff.sqrt() / a_norm.sqrt().max(n_norm.sqrt()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
