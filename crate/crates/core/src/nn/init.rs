//! Parameter initializers.

use rand::Rng;

use crate::rng::seeded;
use crate::tensor::Tensor;

/// Fan-in and fan-out of a conv (`C_out×C_in×k×k`) or linear (`out×in`) weight.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    let receptive: usize = shape[2..].iter().product();
    (shape[1] * receptive, shape[0] * receptive)
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(shape: &[usize], seed: u64) -> Tensor {
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seeded(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Zero-mean uniform with variance `1e-4`, i.e. bound `sqrt(3e-4)`.
pub fn uniform_linear(shape: &[usize], seed: u64) -> Tensor {
    let bound = (3.0e-4f64).sqrt();
    let mut rng = seeded(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

pub fn zeros_bias(n: usize) -> Tensor {
    Tensor::zeros(&[n])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(t: &Tensor) -> f64 {
        let n = t.len() as f64;
        let mean = t.sum() / n;
        t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = xavier_uniform(&[4, 3, 3, 3], 9);
        let b = xavier_uniform(&[4, 3, 3, 3], 9);
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, xavier_uniform(&[4, 3, 3, 3], 10));
    }

    #[test]
    fn xavier_variance_matches_moment() {
        // 10⁵ draws: Var[U(-b, b)] = b²/3 = 2/(fan_in + fan_out)
        let shape = [100, 112, 3, 3];
        let t = xavier_uniform(&shape, 3);
        assert!(t.len() >= 100_000);
        let (fi, fo) = fans(&shape);
        let expected = 2.0 / (fi + fo) as f64;
        assert!((variance(&t) / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn linear_init_moments() {
        let t = uniform_linear(&[400, 250], 4);
        assert!((variance(&t) / 1e-4 - 1.0).abs() < 0.05);
        assert!((t.sum() / t.len() as f64).abs() < 1e-3);
    }

    #[test]
    fn bias_is_exactly_zero() {
        assert!(zeros_bias(7).data().iter().all(|&v| v == 0.0));
    }
}
