//! Kernel-predicting blender that merges the forward and backward predictions.

use crate::arch::ArchConfig;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Bound, ConvBlock, ParamStore, Resample};
use crate::predictor::StepActivations;
use crate::tensor::Tensor;

/// Relative position `(t − p) / (m + 1)` of middle frame `t` in `(0, 1)`.
pub fn scaled_time_step(t: usize, p: usize, m: usize) -> Result<f64> {
    if t <= p || t > p + m {
        return Err(Error::Range(format!("timestep {t} outside the middle frames {}..={}", p + 1, p + m)));
    }
    Ok((t - p) as f64 / (m + 1) as f64)
}

/// Per-pixel separable kernels for both source frames, each `k×H×W`.
#[derive(Clone, Copy, Debug)]
pub struct KernelField {
    pub vertical_p: Var,
    pub horizontal_p: Var,
    pub vertical_f: Var,
    pub horizontal_f: Var,
}

/// How the two kernel-filtered source frames are combined.
#[derive(Clone, Copy, Debug)]
pub enum Mix {
    /// Plain sum `K^P ∗ P + K^F ∗ F`.
    Sum,
    /// `(1 − w)·(K^P ∗ P) + w·(K^F ∗ F)`.
    TimeWeighted(f64),
}

/// Filters each source frame with its kernel field and combines the results.
pub fn apply_kernels(g: &mut Graph, field: &KernelField, frame_p: Var, frame_f: Var, mix: Mix) -> Result<Var> {
    if g.shape(frame_p) != g.shape(frame_f) {
        return Err(shape_err!("source frames differ: {:?} vs {:?}", g.shape(frame_p), g.shape(frame_f)));
    }
    let a = g.sepconv(frame_p, field.vertical_p, field.horizontal_p)?;
    let b = g.sepconv(frame_f, field.vertical_f, field.horizontal_f)?;
    match mix {
        Mix::Sum => g.add(a, b),
        Mix::TimeWeighted(w) => {
            let a = g.scale(a, 1.0 - w);
            let b = g.scale(b, w);
            g.add(a, b)
        }
    }
}

/// Encoder–decoder over the concatenated deep activations of both
/// directions, followed by four heads that each emit one 1-D kernel per pixel.
///
/// Decoders 2 and 1 take the previous decoder output plus the predictor's
/// decoder features of matching resolution from both directions. When
/// `time_aware`, the scaled time step is appended as one constant channel
/// before the heads.
#[derive(Clone, Debug)]
pub struct Blender {
    pub encoder: [ConvBlock; 2],
    pub decoder: [ConvBlock; 4],
    /// Vertical-P, horizontal-P, vertical-F, horizontal-F.
    pub heads: [ConvBlock; 4],
    pub time_aware: bool,
    pub kernel_size: usize,
}

const HEAD_NAMES: [&str; 4] = ["vertical_p", "horizontal_p", "vertical_f", "horizontal_f"];

impl Blender {
    pub fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig, time_aware: bool) -> Self {
        let n = arch.convs_per_block;
        let [b1, b2] = arch.blend_encoder;
        let [d4, d3, d2, d1] = arch.blend_decoder;
        let block = |store: &mut ParamStore, block: &str, cin, cout, r| ConvBlock::uniform(store, &format!("{name}.{block}"), cin, cout, n, r);
        let encoder = [
            block(store, "enc1", 2 * arch.deep_width, b1, Resample::MaxPool),
            block(store, "enc2", b1, b2, Resample::MaxPool),
        ];
        let decoder = [
            block(store, "dec4", b2, d4, Resample::Upsample),
            block(store, "dec3", d4, d3, Resample::Upsample),
            block(store, "dec2", d3, d2, Resample::Upsample),
            block(store, "dec1", d2, d1, Resample::Upsample),
        ];
        let head_in = d1 + usize::from(time_aware);
        let mut chain = vec![head_in];
        chain.extend(std::iter::repeat(arch.head_width).take(n.max(2) - 1));
        chain.push(arch.kernel_size);
        let heads = HEAD_NAMES.map(|h| ConvBlock::new(store, &format!("{name}.head_{h}"), &chain, Resample::Upsample));
        Blender { encoder, decoder, heads, time_aware, kernel_size: arch.kernel_size }
    }

    /// Kernel fields from both directions' activations and, when time-aware,
    /// the scaled time step `w` (a scalar variable).
    pub fn generate_kernels(&self, g: &mut Graph, p: &Bound, e_p: &StepActivations, e_f: &StepActivations, w: Option<Var>) -> Result<KernelField> {
        for (a, b, what) in [(e_p.deep, e_f.deep, "deep"), (e_p.coarse, e_f.coarse, "coarse"), (e_p.fine, e_f.fine, "fine")] {
            if g.shape(a) != g.shape(b) {
                return Err(shape_err!("{what} activations misaligned: {:?} vs {:?}", g.shape(a), g.shape(b)));
            }
        }
        let x = g.concat_channels(&[e_p.deep, e_f.deep])?;
        let x = self.encoder[0].forward(g, p, x)?;
        let x = self.encoder[1].forward(g, p, x)?;
        let x = self.decoder[0].forward(g, p, x)?;
        let x = self.decoder[1].forward(g, p, x)?;
        let x = residual_sum(g, x, e_p.coarse, e_f.coarse)?;
        let x = self.decoder[2].forward(g, p, x)?;
        let x = residual_sum(g, x, e_p.fine, e_f.fine)?;
        let mut x = self.decoder[3].forward(g, p, x)?;
        match (self.time_aware, w) {
            (true, Some(w)) => {
                if !g.value(w).is_scalar() {
                    return Err(shape_err!("time step must be a scalar"));
                }
                let (_, h, wd) = g.value(x).chw()?;
                let ones = g.constant(Tensor::full(&[1, h, wd], 1.0));
                let plane = g.mul(w, ones)?;
                x = g.concat_channels(&[x, plane])?;
            }
            (false, None) => {}
            (true, None) => return Err(Error::Config("time-aware blender needs a time step".into())),
            (false, Some(_)) => return Err(Error::Config("time-agnostic blender takes no time step".into())),
        }
        let [a, b, c, d] = &self.heads;
        Ok(KernelField {
            vertical_p: a.forward(g, p, x)?,
            horizontal_p: b.forward(g, p, x)?,
            vertical_f: c.forward(g, p, x)?,
            horizontal_f: d.forward(g, p, x)?,
        })
    }

    fn check_field(&self, g: &Graph, field: &KernelField, frame: Var) -> Result<()> {
        let (_, h, w) = g.value(frame).chw()?;
        let expected = [self.kernel_size, h, w];
        if g.shape(field.vertical_p) != expected {
            return Err(shape_err!(
                "kernel field {:?} does not cover a {h}×{w} frame (activations must be at 1/8 of the frame size)",
                g.shape(field.vertical_p)
            ));
        }
        Ok(())
    }

    /// Time-aware blend of one middle frame.
    pub fn tai_blend(&self, g: &mut Graph, p: &Bound, v_p: Var, e_p: &StepActivations, v_f: Var, e_f: &StepActivations, w: Var) -> Result<Var> {
        let field = self.generate_kernels(g, p, e_p, e_f, Some(w))?;
        self.check_field(g, &field, v_p)?;
        apply_kernels(g, &field, v_p, v_f, Mix::Sum)
    }

    /// Time-agnostic blend: the same pipeline without the time channel.
    pub fn interp_blend(&self, g: &mut Graph, p: &Bound, v_p: Var, e_p: &StepActivations, v_f: Var, e_f: &StepActivations) -> Result<Var> {
        let field = self.generate_kernels(g, p, e_p, e_f, None)?;
        self.check_field(g, &field, v_p)?;
        apply_kernels(g, &field, v_p, v_f, Mix::Sum)
    }

    /// Time-agnostic kernels with a fixed time-weighted average of the two
    /// filtered frames.
    pub fn twi_blend(&self, g: &mut Graph, p: &Bound, v_p: Var, e_p: &StepActivations, v_f: Var, e_f: &StepActivations, w: f64) -> Result<Var> {
        let field = self.generate_kernels(g, p, e_p, e_f, None)?;
        self.check_field(g, &field, v_p)?;
        apply_kernels(g, &field, v_p, v_f, Mix::TimeWeighted(w))
    }
}

fn residual_sum(g: &mut Graph, x: Var, a: Var, b: Var) -> Result<Var> {
    if g.shape(x) != g.shape(a) {
        return Err(shape_err!("decoder output {:?} cannot take residual {:?}", g.shape(x), g.shape(a)));
    }
    let ab = g.add(a, b)?;
    g.add(x, ab)
}
