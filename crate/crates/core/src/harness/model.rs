//! One inpainting model per [`Variant`]: a predictor plus, for the learned
//! blends, a blender, sharing a single parameter store.

use crate::arch::ArchConfig;
use crate::autodiff::{Graph, Var};
use crate::baselines::{blend_on_graph, handcrafted};
use crate::blender::{scaled_time_step, Blender};
use crate::data::ClipTriplet;
use crate::error::{Error, Result};
use crate::harness::config::Variant;
use crate::nn::{Bound, ParamStore};
use crate::predictor::Predictor;
use crate::tensor::Tensor;

/// Graph outputs of one inpainting pass.
#[derive(Clone, Debug)]
pub struct Outputs {
    pub forward: Option<Vec<Var>>,
    pub backward: Option<Vec<Var>>,
    pub final_frames: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub variant: Variant,
    pub store: ParamStore,
    pub predictor: Option<Predictor>,
    pub blender: Option<Blender>,
}

impl Model {
    pub fn new(variant: Variant, arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new(seed);
        let (predictor, blender) = match variant {
            Variant::Handcrafted(_) => (None, None),
            Variant::Tai | Variant::Twi => {
                let pred = Predictor::new(&mut store, "predictor", arch);
                let blend = Blender::new(&mut store, "blender", arch, variant == Variant::Tai);
                (Some(pred), Some(blend))
            }
            Variant::BiTw | Variant::BiSa | Variant::ForwardOnly => (Some(Predictor::new(&mut store, "predictor", arch)), None),
        };
        Ok(Model { variant, store, predictor, blender })
    }

    /// Records the inpainting of `m` frames between `preceding` and `following`.
    pub fn run(&self, g: &mut Graph, p: &Bound, preceding: &[Var], following: &[Var], m: usize) -> Result<Outputs> {
        let pred = self
            .predictor
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} has no learned components", self.variant.name())))?;
        if self.variant == Variant::ForwardOnly {
            let fwd = pred.predict_forward(g, p, preceding, m)?;
            return Ok(Outputs { forward: None, backward: None, final_frames: fwd.frames });
        }
        let n = preceding.len();
        let bundle = pred.bidirectional_predict(g, p, preceding, following, m)?;
        let mut final_frames = Vec::with_capacity(m);
        for j in 0..m {
            let w = scaled_time_step(n + 1 + j, n, m)?;
            let (a, b) = (bundle.forward[j], bundle.backward[j]);
            let (ea, eb) = (&bundle.forward_activations[j], &bundle.backward_activations[j]);
            let frame = match (self.variant, &self.blender) {
                (Variant::Tai, Some(bl)) => {
                    let wv = g.constant(Tensor::scalar(w));
                    bl.tai_blend(g, p, a, ea, b, eb, wv)?
                }
                (Variant::Twi, Some(bl)) => bl.twi_blend(g, p, a, ea, b, eb, w)?,
                (Variant::BiTw, _) => blend_on_graph(g, a, b, w)?,
                (Variant::BiSa, _) => blend_on_graph(g, a, b, 0.5)?,
                _ => unreachable!("blender exists for blended variants"),
            };
            final_frames.push(frame);
        }
        Ok(Outputs { forward: Some(bundle.forward), backward: Some(bundle.backward), final_frames })
    }

    /// Fills the middle of `clip` (its length sets the number of frames),
    /// clamping outputs to `[0, 1]`.
    pub fn infer(&self, clip: &ClipTriplet) -> Result<Vec<Tensor>> {
        if let Variant::Handcrafted(kind) = self.variant {
            let seq = handcrafted(kind, clip).ok_or_else(|| Error::Config(format!("{kind:?} needs a trained predictor")))?;
            return Ok(seq.frames());
        }
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g, false);
        let pre: Vec<Var> = clip.preceding.frames().into_iter().map(|t| g.constant(t)).collect();
        let fol: Vec<Var> = clip.following.frames().into_iter().map(|t| g.constant(t)).collect();
        let out = self.run(&mut g, &bound, &pre, &fol, clip.m())?;
        Ok(out.final_frames.iter().map(|&v| g.value(v).map(|x| x.clamp(0.0, 1.0))).collect())
    }
}
