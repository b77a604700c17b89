//! Recurrent encoder–decoder video predictor, run in both temporal directions
//! with one shared set of weights.

use crate::arch::ArchConfig;
use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Bound, Conv, ConvLstm, ConvLstmState, ParamStore};

/// Activations of one generation step, consumed by the blender.
#[derive(Clone, Copy, Debug)]
pub struct StepActivations {
    /// Projection of the recurrent state, `deep_width×H/8×W/8`.
    pub deep: Var,
    /// Decoder feature at `H/8`.
    pub coarse: Var,
    /// Decoder feature at `H/4`.
    pub fine: Var,
}

/// Number of recurrent updates performed by one unrolled prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UnrollStats {
    pub warmup_updates: usize,
    pub generation_steps: usize,
}

/// Frames generated in one direction, with their activations, in the order
/// the predictor produced them.
#[derive(Clone, Debug)]
pub struct Directional {
    pub frames: Vec<Var>,
    pub activations: Vec<StepActivations>,
    pub stats: UnrollStats,
}

impl Directional {
    fn reversed(mut self) -> Self {
        self.frames.reverse();
        self.activations.reverse();
        self
    }
}

/// Forward and backward predictions of the middle frames, both indexed by
/// absolute time `p+1..p+m` (entry `j` is timestep `p+1+j`).
#[derive(Clone, Debug)]
pub struct PredictionBundle {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
    pub forward_activations: Vec<StepActivations>,
    pub backward_activations: Vec<StepActivations>,
}

impl PredictionBundle {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

/// ConvLSTM encoder–decoder with encoder skip connections.
///
/// Per frame: three conv+pool encoder levels (`H → H/8`), a ConvLSTM at `H/8`,
/// then a decoder that upsamples back to `H`, concatenating the pre-pooling
/// encoder feature of matching resolution at `H/4`, `H/2` and `H`. The decoder predicts
/// the change from the step's input frame, so an untrained predictor starts
/// near "repeat the last frame". The output is linear: a squashing
/// nonlinearity saturates on mostly-black frames, where the optimum sits at
/// its asymptote. Consumers clamp to `[0, 1]` for display and scoring.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub encoder: [Conv; 3],
    pub lstm: ConvLstm,
    pub project: Conv,
    pub decoder: [Conv; 4],
    pub output: Conv,
    pub channels: usize,
}

impl Predictor {
    pub fn new(store: &mut ParamStore, name: &str, arch: &ArchConfig) -> Self {
        let [e1, e2, e3] = arch.pred_encoder;
        let (coarse, fine) = (arch.coarse_residual(), arch.fine_residual());
        Predictor {
            encoder: [
                Conv::new(store, &format!("{name}.enc1"), arch.channels, e1, 3),
                Conv::new(store, &format!("{name}.enc2"), e1, e2, 3),
                Conv::new(store, &format!("{name}.enc3"), e2, e3, 3),
            ],
            lstm: ConvLstm::new(store, &format!("{name}.lstm"), e3, arch.pred_hidden),
            project: Conv::new(store, &format!("{name}.project"), arch.pred_hidden, arch.deep_width, 1),
            decoder: [
                Conv::new(store, &format!("{name}.dec3"), arch.pred_hidden, coarse, 3),
                Conv::new(store, &format!("{name}.dec2"), coarse + e3, fine, 3),
                Conv::new(store, &format!("{name}.dec1"), fine + e2, arch.pred_top, 3),
                Conv::new(store, &format!("{name}.dec0"), arch.pred_top + e1, arch.pred_top, 3),
            ],
            output: Conv::new(store, &format!("{name}.out"), arch.pred_top, arch.channels, 3),
            channels: arch.channels,
        }
    }

    fn check_frame(&self, g: &Graph, frame: Var) -> Result<(usize, usize)> {
        let (c, h, w) = g.value(frame).chw()?;
        if c != self.channels {
            return Err(shape_err!("predictor expects {} channels, got {c}", self.channels));
        }
        if h % 8 != 0 || w % 8 != 0 {
            return Err(shape_err!("frame sides must be multiples of 8, got {h}×{w}"));
        }
        Ok((h, w))
    }

    /// Pre-pooling encoder features at `H`, `H/2`, `H/4` (the decoder skips)
    /// and the pooled recurrent input at `H/8`.
    fn encode(&self, g: &mut Graph, p: &Bound, frame: Var) -> Result<([Var; 3], Var)> {
        let mut skips = [frame; 3];
        let mut x = frame;
        for (level, conv) in self.encoder.iter().enumerate() {
            let y = conv.forward(g, p, x)?;
            skips[level] = g.relu(y);
            x = g.max_pool2(skips[level])?;
        }
        Ok((skips, x))
    }

    fn relu_conv(g: &mut Graph, p: &Bound, conv: &Conv, x: Var) -> Result<Var> {
        let y = conv.forward(g, p, x)?;
        Ok(g.relu(y))
    }

    /// Decodes one recurrent state into a frame plus the exposed activations.
    fn decode(&self, g: &mut Graph, p: &Bound, input: Var, hidden: Var, skips: &[Var; 3]) -> Result<(Var, StepActivations)> {
        let deep = Self::relu_conv(g, p, &self.project, hidden)?;
        let coarse = Self::relu_conv(g, p, &self.decoder[0], hidden)?;
        let mut x = coarse;
        let mut fine = coarse;
        for (level, conv) in self.decoder[1..].iter().enumerate() {
            let up = g.upsample2(x)?;
            let cat = g.concat_channels(&[up, skips[2 - level]])?;
            x = Self::relu_conv(g, p, conv, cat)?;
            if level == 0 {
                fine = x;
            }
        }
        let change = self.output.forward(g, p, x)?;
        let frame = g.add(input, change)?;
        Ok((frame, StepActivations { deep, coarse, fine }))
    }

    fn advance(&self, g: &mut Graph, p: &Bound, frame: Var, state: ConvLstmState) -> Result<([Var; 3], Var, ConvLstmState)> {
        let (skips, pooled) = self.encode(g, p, frame)?;
        let (hidden, state) = self.lstm.step(g, p, pooled, state)?;
        Ok((skips, hidden, state))
    }

    /// Observes `context` in order, then generates the next `m` frames, each
    /// step consuming the previous prediction.
    pub fn predict_forward(&self, g: &mut Graph, p: &Bound, context: &[Var], m: usize) -> Result<Directional> {
        let (&last, warmup) = context
            .split_last()
            .ok_or_else(|| Error::Input("predictor needs at least one context frame".into()))?;
        if m == 0 {
            return Err(Error::Input("asked to generate zero frames".into()));
        }
        let (h, w) = self.check_frame(g, last)?;
        for &f in warmup {
            if self.check_frame(g, f)? != (h, w) {
                return Err(shape_err!("context frames differ in size"));
            }
        }
        let mut stats = UnrollStats::default();
        let mut state = self.lstm.zero_state(g, h / 8, w / 8);
        for &frame in warmup {
            let (_, pooled) = self.encode(g, p, frame)?;
            state = self.lstm.step(g, p, pooled, state)?.1;
            stats.warmup_updates += 1;
        }
        let mut frames = Vec::with_capacity(m);
        let mut activations = Vec::with_capacity(m);
        let mut input = last;
        for _ in 0..m {
            let (skips, hidden, next) = self.advance(g, p, input, state)?;
            state = next;
            let (frame, act) = self.decode(g, p, input, hidden, &skips)?;
            stats.generation_steps += 1;
            frames.push(frame);
            activations.push(act);
            input = frame;
        }
        Ok(Directional { frames, activations, stats })
    }

    /// Predicts the `m` frames before `following` by running the forward
    /// predictor on the reversed sequence, then restoring forward time order.
    pub fn predict_backward(&self, g: &mut Graph, p: &Bound, following: &[Var], m: usize) -> Result<Directional> {
        let reversed: Vec<Var> = following.iter().rev().copied().collect();
        Ok(self.predict_forward(g, p, &reversed, m)?.reversed())
    }

    /// Both directional predictions of the `m` middle frames.
    pub fn bidirectional_predict(&self, g: &mut Graph, p: &Bound, preceding: &[Var], following: &[Var], m: usize) -> Result<PredictionBundle> {
        let fwd = self.predict_forward(g, p, preceding, m)?;
        let bwd = self.predict_backward(g, p, following, m)?;
        Ok(PredictionBundle {
            forward: fwd.frames,
            backward: bwd.frames,
            forward_activations: fwd.activations,
            backward_activations: bwd.activations,
        })
    }
}
