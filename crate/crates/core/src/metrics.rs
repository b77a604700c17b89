//! Per-frame image quality: PSNR and SSIM.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`;
/// `f64::INFINITY` for identical images.
pub fn psnr(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(shape_err!("psnr of {:?} vs {:?}", pred.shape(), truth.shape()));
    }
    let mse = pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

/// SSIM settings; defaults are the standard Gaussian-window constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimConfig {
    /// Window actually used on an `h×w` image: the configured size, or the
    /// largest odd size that fits.
    pub fn effective_window(&self, h: usize, w: usize) -> usize {
        let fit = h.min(w);
        let fit = if fit % 2 == 0 { fit - 1 } else { fit };
        self.window.min(fit)
    }

    /// Normalized 1-D Gaussian taps of length `n`.
    pub fn taps(&self, n: usize) -> Vec<f64> {
        let c = (n / 2) as f64;
        let raw: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

/// Gaussian-weighted sum over every fully contained window, separably.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(j, t)| t * plane[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let taps = cfg.taps(cfg.effective_window(h, w));
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let (mu_a, oh, ow) = filter_valid(a, h, w, &taps);
    let (mu_b, _, _) = filter_valid(b, h, w, &taps);
    let (aa, _, _) = filter_valid(&prod(a, a), h, w, &taps);
    let (bb, _, _) = filter_valid(&prod(b, b), h, w, &taps);
    let (ab, _, _) = filter_valid(&prod(a, b), h, w, &taps);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / (oh * ow) as f64
}

/// Mean structural similarity of two `C×H×W` images, averaged over channels.
pub fn ssim_with(pred: &Tensor, truth: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(shape_err!("ssim of {:?} vs {:?}", pred.shape(), truth.shape()));
    }
    let (c, h, w) = pred.chw()?;
    let n = h * w;
    let sum: f64 = (0..c).map(|ch| ssim_plane(&pred.data()[ch * n..(ch + 1) * n], &truth.data()[ch * n..(ch + 1) * n], h, w, cfg)).sum();
    Ok(sum / c as f64)
}

pub fn ssim(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    ssim_with(pred, truth, &SsimConfig::default())
}

/// Mean over values, skipping infinities (perfect reconstructions under PSNR).
/// Returns `None` when every value is infinite.
pub fn finite_mean(values: &[f64]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        None
    } else {
        Some(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor::full(&[1, 4, 4], 0.5);
        let b = Tensor::full(&[1, 4, 4], 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &Tensor::zeros(&[1, 4, 3])).is_err());
    }

    #[test]
    fn psnr_matches_loop_oracle_and_is_monotone() {
        let mut rng = seeded(1);
        for _ in 0..25 {
            let (h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
            let a = random(&[1, h, w], &mut rng);
            let b = random(&[1, h, w], &mut rng);
            let mut mse = 0.0;
            for y in 0..h {
                for x in 0..w {
                    mse += (a.data()[y * w + x] - b.data()[y * w + x]).powi(2);
                }
            }
            mse /= (h * w) as f64;
            assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-10);
        }
        let base = Tensor::full(&[1, 3, 3], 0.5);
        let scores: Vec<f64> = [0.01, 0.05, 0.2].iter().map(|d| psnr(&base, &base.map(|v| v + d)).unwrap()).collect();
        assert!(scores.windows(2).all(|s| s[0] > s[1]));
    }

    /// Direct windowed formula: explicit 2-D weights and centered moments.
    fn ssim_oracle(a: &Tensor, b: &Tensor) -> f64 {
        let (_, h, w) = a.chw().unwrap();
        let cfg = SsimConfig::default();
        let n = cfg.window.min(if h.min(w) % 2 == 0 { h.min(w) - 1 } else { h.min(w) });
        let c = (n / 2) as f64;
        let mut weights = vec![vec![0.0; n]; n];
        let mut s = 0.0;
        for (i, row) in weights.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
                *v = (-d2 / (2.0 * 1.5 * 1.5)).exp();
                s += *v;
            }
        }
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let mut total = 0.0;
        let mut count = 0;
        for y0 in 0..=h - n {
            for x0 in 0..=w - n {
                let px = |t: &Tensor, i: usize, j: usize| t.data()[(y0 + i) * w + x0 + j];
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        ma += weights[i][j] / s * px(a, i, j);
                        mb += weights[i][j] / s * px(b, i, j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = weights[i][j] / s;
                        va += wt * (px(a, i, j) - ma).powi(2);
                        vb += wt * (px(b, i, j) - mb).powi(2);
                        cov += wt * (px(a, i, j) - ma) * (px(b, i, j) - mb);
                    }
                }
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_identity_and_oracle() {
        let mut rng = seeded(2);
        for case in 0..25 {
            let (h, w) = if case < 20 { (rng.gen_range(1..=8), rng.gen_range(1..=8)) } else { (rng.gen_range(11..=16), rng.gen_range(11..=16)) };
            let a = random(&[1, h, w], &mut rng);
            let b = random(&[1, h, w], &mut rng);
            assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            let got = ssim(&a, &b).unwrap();
            assert!((got - ssim_oracle(&a, &b)).abs() < 1e-10, "{h}×{w}");
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn inverted_structure_scores_negative() {
        let checker = Tensor::from_fn(&[1, 12, 12], |i| if (i / 12 + i % 12) % 2 == 0 { 0.2 } else { 0.8 });
        let inverted = checker.map(|v| 1.0 - v);
        let s = ssim(&inverted, &checker).unwrap();
        assert!(s < 0.0, "{s}");
        assert!((s - ssim_oracle(&inverted, &checker)).abs() < 1e-10);
    }

    #[test]
    fn color_is_channel_mean() {
        let mut rng = seeded(3);
        let a = random(&[3, 12, 12], &mut rng);
        let b = random(&[3, 12, 12], &mut rng);
        let per: f64 = (0..3).map(|c| ssim(&a.index_outer(c).reshape(&[1, 12, 12]).unwrap(), &b.index_outer(c).reshape(&[1, 12, 12]).unwrap()).unwrap()).sum::<f64>() / 3.0;
        assert!((ssim(&a, &b).unwrap() - per).abs() < 1e-15);
    }

    #[test]
    fn finite_mean_skips_infinities() {
        assert_eq!(finite_mean(&[10.0, f64::INFINITY, 20.0]), Some(15.0));
        assert_eq!(finite_mean(&[f64::INFINITY]), None);
    }
}
