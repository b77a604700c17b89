//! Reconstruction and adversarial losses, and the clip discriminator.

use crate::autodiff::{Axis, Graph, Var};
use crate::error::{shape_err, Result};
use crate::nn::{Bound, Conv, Linear, ParamStore, SpectralNorm};

/// Floor applied to every logarithm argument.
pub const LOG_FLOOR: f64 = 1e-8;

fn check_pairs(g: &Graph, pred: &[Var], truth: &[Var]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(shape_err!("{} predicted frames for {} targets", pred.len(), truth.len()));
    }
    for (&a, &b) in pred.iter().zip(truth) {
        if g.shape(a) != g.shape(b) {
            return Err(shape_err!("prediction {:?} vs target {:?}", g.shape(a), g.shape(b)));
        }
    }
    Ok(())
}

fn sum_all(g: &mut Graph, terms: Vec<Var>) -> Result<Var> {
    let mut it = terms.into_iter();
    let mut acc = it.next().expect("at least one term");
    for t in it {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Sum over frames of the squared Euclidean distance.
pub fn l2_loss(g: &mut Graph, pred: &[Var], truth: &[Var]) -> Result<Var> {
    check_pairs(g, pred, truth)?;
    let terms = pred
        .iter()
        .zip(truth)
        .map(|(&a, &b)| {
            let d = g.sub(a, b)?;
            let sq = g.mul(d, d)?;
            Ok(g.sum(sq))
        })
        .collect::<Result<Vec<_>>>()?;
    sum_all(g, terms)
}

/// Sum over frames and pixels of `| |∇truth| − |∇pred| |` along both axes.
pub fn gdl_loss(g: &mut Graph, pred: &[Var], truth: &[Var]) -> Result<Var> {
    check_pairs(g, pred, truth)?;
    let mut terms = Vec::new();
    for (&a, &b) in pred.iter().zip(truth) {
        for axis in [Axis::Vertical, Axis::Horizontal] {
            let da = g.diff(a, axis)?;
            let db = g.diff(b, axis)?;
            let (ma, mb) = (g.abs(da), g.abs(db));
            let d = g.sub(mb, ma)?;
            let ad = g.abs(d);
            terms.push(g.sum(ad));
        }
    }
    sum_all(g, terms)
}

/// Squared error plus gradient difference.
pub fn image_loss(g: &mut Graph, pred: &[Var], truth: &[Var]) -> Result<Var> {
    let a = l2_loss(g, pred, truth)?;
    let b = gdl_loss(g, pred, truth)?;
    g.add(a, b)
}

/// Generator objective weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 0.002 }
    }
}

/// Scalar values of every loss term of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    /// Squared error of the final prediction.
    pub l2: f64,
    /// Gradient difference of the final prediction.
    pub gdl: f64,
    pub img_forward: f64,
    pub img_backward: f64,
    pub img_final: f64,
    pub gan: f64,
    pub total_g: f64,
    pub total_d: f64,
}

/// Graph handles of the generator objective; `total` is what gets minimized.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub report: LossReport,
}

/// `α·(L_img(fwd) + L_img(bwd) + L_img(final)) + β·(−log D(fake))`.
///
/// The intermediate predictions are optional: a forward-only predictor
/// supervises just its single output, passed as `final_pred`.
pub fn generator_loss(
    g: &mut Graph,
    forward: Option<&[Var]>,
    backward: Option<&[Var]>,
    final_pred: &[Var],
    truth: &[Var],
    d_fake: Var,
    weights: LossWeights,
) -> Result<GeneratorLoss> {
    let mut report = LossReport::default();
    let l2 = l2_loss(g, final_pred, truth)?;
    let gdl = gdl_loss(g, final_pred, truth)?;
    let img_final = g.add(l2, gdl)?;
    report.l2 = g.value(l2).item();
    report.gdl = g.value(gdl).item();
    report.img_final = g.value(img_final).item();
    let mut images = vec![img_final];
    if let Some(f) = forward {
        let v = image_loss(g, f, truth)?;
        report.img_forward = g.value(v).item();
        images.push(v);
    }
    if let Some(b) = backward {
        let v = image_loss(g, b, truth)?;
        report.img_backward = g.value(v).item();
        images.push(v);
    }
    if !g.value(d_fake).is_scalar() {
        return Err(shape_err!("discriminator output must be a scalar"));
    }
    let reconstruction = sum_all(g, images)?;
    let safe = g.clamp_min(d_fake, LOG_FLOOR);
    let log_d = g.log(safe)?;
    let gan = g.neg(log_d);
    report.gan = g.value(gan).item();
    let a = g.scale(reconstruction, weights.alpha);
    let b = g.scale(gan, weights.beta);
    let total = g.add(a, b)?;
    report.total_g = g.value(total).item();
    Ok(GeneratorLoss { total, report })
}

/// Cross-entropy `−log D(real) − log(1 − D(fake))`.
pub fn discriminator_loss(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
    let r = g.clamp_min(d_real, LOG_FLOOR);
    let lr = g.log(r)?;
    let not_fake = g.affine(d_fake, -1.0, 1.0);
    let f = g.clamp_min(not_fake, LOG_FLOOR);
    let lf = g.log(f)?;
    let s = g.add(lr, lf)?;
    Ok(g.neg(s))
}

/// Clip classifier: stride-2 3×3 convs with ReLU, then one linear unit and a
/// sigmoid. Every weight is spectrally normalized.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub convs: Vec<Conv>,
    pub linear: Linear,
    /// One per conv, then one for the linear layer.
    pub norms: Vec<SpectralNorm>,
    /// Frames × channels of the expected input.
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Discriminator {
    /// `frames` frames of `channels×height×width`; sides must be divisible by `2^widths.len()`.
    pub fn new(store: &mut ParamStore, name: &str, frames: usize, channels: usize, height: usize, width: usize, widths: &[usize], lipschitz: f64) -> Result<Self> {
        let depth = 1usize << widths.len();
        if widths.is_empty() || height % depth != 0 || width % depth != 0 {
            return Err(shape_err!("{height}×{width} frames cannot be halved {} times", widths.len()));
        }
        let in_channels = frames * channels;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut cin = in_channels;
        for (i, &cout) in widths.iter().enumerate() {
            let conv = Conv::strided(store, &format!("{name}.conv{i}"), cin, cout, 3, 2);
            norms.push(SpectralNorm::new(store, &format!("{name}.conv{i}.sn"), conv.weight, lipschitz));
            convs.push(conv);
            cin = cout;
        }
        let flat = cin * (height / depth) * (width / depth);
        let linear = Linear::new(store, &format!("{name}.linear"), flat, 1);
        norms.push(SpectralNorm::new(store, &format!("{name}.linear.sn"), linear.weight, lipschitz));
        Ok(Discriminator { convs, linear, norms, in_channels, height, width })
    }

    /// One power-iteration step per normalized layer.
    pub fn power_iterate(&self, store: &mut ParamStore, iters: usize) {
        for n in &self.norms {
            n.power_iterate(store, iters);
        }
    }

    /// Probability that `frames` (the whole `[P, M, F]` window) is real, using
    /// the stored singular-vector estimates.
    pub fn forward(&self, g: &mut Graph, p: &Bound, store: &ParamStore, frames: &[Var]) -> Result<Var> {
        let x = g.concat_channels(frames)?;
        let (c, h, w) = g.value(x).chw()?;
        if (c, h, w) != (self.in_channels, self.height, self.width) {
            return Err(shape_err!(
                "discriminator expects {}×{}×{}, got {c}×{h}×{w}",
                self.in_channels,
                self.height,
                self.width
            ));
        }
        let mut x = x;
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            let wt = norm.effective(g, p, store)?;
            let y = g.conv2d_strided(x, wt, Some(p.var(conv.bias)), 1, 2)?;
            x = g.relu(y);
        }
        let wt = self.norms.last().expect("linear norm").effective(g, p, store)?;
        let logit = g.linear(x, wt, Some(p.var(self.linear.bias)))?;
        Ok(g.sigmoid(logit))
    }
}
