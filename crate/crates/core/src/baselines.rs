//! Hand-crafted inpainting baselines and fixed blends of bidirectional predictions.

use crate::autodiff::{Graph, Var};
use crate::blender::scaled_time_step;
use crate::data::{ClipTriplet, FrameSequence};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Every non-learned way of filling the middle frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    RepeatP,
    RepeatF,
    SaPF,
    TwPF,
    BiSa,
    BiTw,
}

impl BaselineKind {
    /// Whether the baseline blends outputs of a trained predictor.
    pub fn needs_predictor(self) -> bool {
        matches!(self, BaselineKind::BiSa | BaselineKind::BiTw)
    }
}

fn repeated(frame: Tensor, m: usize) -> FrameSequence {
    FrameSequence::from_frames(&vec![frame; m]).expect("valid frame")
}

/// `m` copies of the last preceding frame.
pub fn repeat_p(clip: &ClipTriplet) -> FrameSequence {
    repeated(clip.last_preceding(), clip.m())
}

/// `m` copies of the first following frame.
pub fn repeat_f(clip: &ClipTriplet) -> FrameSequence {
    repeated(clip.first_following(), clip.m())
}

/// `m` copies of the average of the two frames bordering the gap.
pub fn sa_pf(clip: &ClipTriplet) -> FrameSequence {
    let avg = clip.last_preceding().zip_map(&clip.first_following(), |a, b| (a + b) / 2.0).expect("same shape");
    repeated(avg, clip.m())
}

/// Linear cross-fade from the last preceding to the first following frame.
pub fn tw_pf(clip: &ClipTriplet) -> FrameSequence {
    let (p, m) = (clip.p(), clip.m());
    let (a, b) = (clip.last_preceding(), clip.first_following());
    let frames: Vec<Tensor> = (p + 1..=p + m)
        .map(|t| {
            let w = scaled_time_step(t, p, m).expect("t in range");
            a.zip_map(&b, |x, y| (1.0 - w) * x + w * y).expect("same shape")
        })
        .collect();
    FrameSequence::from_frames(&frames).expect("valid frames")
}

fn check_lengths(forward: &[Tensor], backward: &[Tensor]) -> Result<()> {
    if forward.len() != backward.len() || forward.is_empty() {
        return Err(shape_err!("{} forward vs {} backward frames", forward.len(), backward.len()));
    }
    Ok(())
}

/// Frame-wise mean of the two directional predictions.
pub fn bi_sa(forward: &[Tensor], backward: &[Tensor]) -> Result<Vec<Tensor>> {
    check_lengths(forward, backward)?;
    forward.iter().zip(backward).map(|(a, b)| a.zip_map(b, |x, y| (x + y) / 2.0)).collect()
}

/// `(1 − w_t)·forward + w_t·backward` for `t = p+1..p+m`.
pub fn bi_tw(forward: &[Tensor], backward: &[Tensor], p: usize) -> Result<Vec<Tensor>> {
    check_lengths(forward, backward)?;
    let m = forward.len();
    forward
        .iter()
        .zip(backward)
        .enumerate()
        .map(|(j, (a, b))| {
            let w = scaled_time_step(p + 1 + j, p, m)?;
            a.zip_map(b, |x, y| (1.0 - w) * x + w * y)
        })
        .collect()
}

/// `(1 − w)·a + w·b` recorded on the graph.
pub fn blend_on_graph(g: &mut Graph, a: Var, b: Var, w: f64) -> Result<Var> {
    let a = g.scale(a, 1.0 - w);
    let b = g.scale(b, w);
    g.add(a, b)
}

/// Runs one of the predictor-free baselines.
pub fn handcrafted(kind: BaselineKind, clip: &ClipTriplet) -> Option<FrameSequence> {
    match kind {
        BaselineKind::RepeatP => Some(repeat_p(clip)),
        BaselineKind::RepeatF => Some(repeat_f(clip)),
        BaselineKind::SaPF => Some(sa_pf(clip)),
        BaselineKind::TwPF => Some(tw_pf(clip)),
        BaselineKind::BiSa | BaselineKind::BiTw => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split_clip;
    use proptest::prelude::*;

    fn clip_from(values: &[f64], p: usize, m: usize, f: usize, h: usize, w: usize) -> ClipTriplet {
        let frames: Vec<Tensor> = values.chunks(h * w).map(|c| Tensor::new(&[1, h, w], c.to_vec()).unwrap()).collect();
        split_clip(&FrameSequence::from_frames(&frames).unwrap(), p, m, f).unwrap()
    }

    fn scalar_clip(vp: f64, vf: f64, m: usize) -> ClipTriplet {
        let mut v = vec![0.3, vp];
        v.extend(std::iter::repeat(0.9).take(m));
        v.extend([vf, 0.1]);
        clip_from(&v, 2, m, 2, 1, 1)
    }

    fn flat(seq: &FrameSequence) -> Vec<f64> {
        seq.tensor().data().to_vec()
    }

    #[test]
    fn scalar_examples() {
        let c = scalar_clip(0.2, 0.7, 3);
        assert_eq!(flat(&repeat_p(&c)), vec![0.2; 3]);
        assert_eq!(flat(&repeat_f(&c)), vec![0.7; 3]);
        let c = scalar_clip(0.0, 1.0, 3);
        assert_eq!(flat(&sa_pf(&c)), vec![0.5; 3]);
        assert_eq!(flat(&tw_pf(&c)), vec![0.25, 0.5, 0.75]);
        let f = [Tensor::scalar(0.2)];
        let b = [Tensor::scalar(0.6)];
        assert!((bi_sa(&f, &b).unwrap()[0].item() - 0.4).abs() < 1e-15);
        // m = 3 gives w = 0.25 for the first frame
        let f3 = vec![Tensor::scalar(0.2); 3];
        let b3 = vec![Tensor::scalar(0.6); 3];
        assert!((bi_tw(&f3, &b3, 4).unwrap()[0].item() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn static_clip_is_reproduced_exactly() {
        let c = clip_from(&vec![0.4; 9 * 4], 3, 3, 3, 2, 2);
        for seq in [repeat_p(&c), repeat_f(&c), sa_pf(&c), tw_pf(&c)] {
            assert_eq!(seq, c.middle);
        }
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let a = vec![Tensor::scalar(0.1); 2];
        let b = vec![Tensor::scalar(0.1); 3];
        assert!(bi_sa(&a, &b).is_err());
        assert!(bi_tw(&a, &b, 1).is_err());
    }

    proptest! {
        #[test]
        fn closed_forms_hold_bitwise(
            p in 1usize..4, m in 1usize..6, f in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let (h, w) = (2, 3);
            let values: Vec<f64> = (0..(p + m + f) * h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let c = clip_from(&values, p, m, f, h, w);
            let (vp, vf) = (c.last_preceding(), c.first_following());
            let rp = repeat_p(&c);
            let rf = repeat_f(&c);
            let sa = sa_pf(&c);
            let tw = tw_pf(&c);
            for j in 0..m {
                let wt = (j + 1) as f64 / (m + 1) as f64;
                for i in 0..h * w {
                    let (a, b) = (vp.data()[i], vf.data()[i]);
                    prop_assert_eq!(rp.frame(j).data()[i].to_bits(), a.to_bits());
                    prop_assert_eq!(rf.frame(j).data()[i].to_bits(), b.to_bits());
                    prop_assert_eq!(sa.frame(j).data()[i].to_bits(), ((a + b) / 2.0).to_bits());
                    prop_assert_eq!(tw.frame(j).data()[i].to_bits(), ((1.0 - wt) * a + wt * b).to_bits());
                    if 2 * (j + 1) == m + 1 {
                        prop_assert_eq!(tw.frame(j).data()[i].to_bits(), sa.frame(j).data()[i].to_bits());
                    }
                }
            }
            let fwd: Vec<Tensor> = (0..m).map(|_| Tensor::from_fn(&[1, h, w], |_| rng.gen_range(0.0..=1.0))).collect();
            let bwd: Vec<Tensor> = (0..m).map(|_| Tensor::from_fn(&[1, h, w], |_| rng.gen_range(0.0..=1.0))).collect();
            let bsa = bi_sa(&fwd, &bwd).unwrap();
            let btw = bi_tw(&fwd, &bwd, p).unwrap();
            for j in 0..m {
                let wt = (j + 1) as f64 / (m + 1) as f64;
                for i in 0..h * w {
                    let (a, b) = (fwd[j].data()[i], bwd[j].data()[i]);
                    prop_assert_eq!(bsa[j].data()[i].to_bits(), ((a + b) / 2.0).to_bits());
                    prop_assert_eq!(btw[j].data()[i].to_bits(), ((1.0 - wt) * a + wt * b).to_bits());
                    if 2 * (j + 1) == m + 1 {
                        prop_assert_eq!(btw[j].data()[i].to_bits(), bsa[j].data()[i].to_bits());
                    }
                }
            }
            if vp == vf {
                prop_assert_eq!(&rp, &rf);
            }
        }
    }
}
