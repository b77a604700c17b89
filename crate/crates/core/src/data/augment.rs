//! Training-time augmentation: horizontal mirroring and time reversal.

use rand::Rng;

use crate::data::sequence::ClipTriplet;
use crate::rng::seeded;

/// Mirrors every frame of the clip left-to-right.
pub fn flip_horizontal(clip: &ClipTriplet) -> ClipTriplet {
    ClipTriplet {
        preceding: clip.preceding.flipped_horizontally(),
        middle: clip.middle.flipped_horizontally(),
        following: clip.following.flipped_horizontally(),
    }
}

/// Plays the clip backwards; the old following frames become the new preceding ones.
pub fn reverse_time(clip: &ClipTriplet) -> ClipTriplet {
    ClipTriplet {
        preceding: clip.following.reversed(),
        middle: clip.middle.reversed(),
        following: clip.preceding.reversed(),
    }
}

/// Independently flips (p = ½) and time-reverses (p = ½) the clip.
pub fn augment(clip: &ClipTriplet, seed: u64) -> ClipTriplet {
    let mut rng = seeded(seed);
    let flip = rng.gen_bool(0.5);
    let reverse = rng.gen_bool(0.5);
    let mut out = clip.clone();
    if flip {
        out = flip_horizontal(&out);
    }
    if reverse {
        out = reverse_time(&out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sequence::{split_clip, FrameSequence};
    use crate::data::synthetic::{generate_clip, SceneObject, SceneSpec, ShapeKind};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn moving_clip() -> ClipTriplet {
        let spec = SceneSpec {
            channels: 1,
            height: 12,
            width: 12,
            objects: vec![SceneObject { kind: ShapeKind::Square, size: 3, x: 0, y: 1, vx: 1, vy: 0, color: vec![0.8] }],
            seed: 0,
        };
        split_clip(&generate_clip(&spec, 9).unwrap(), 3, 3, 3).unwrap()
    }

    #[test]
    fn flips_and_reversals_are_involutions() {
        let c = moving_clip();
        assert_eq!(flip_horizontal(&flip_horizontal(&c)), c);
        assert_eq!(reverse_time(&reverse_time(&c)), c);
    }

    #[test]
    fn reversal_matches_index_map() {
        let c = moving_clip();
        let all = c.reassemble();
        let r = reverse_time(&c);
        let t = all.len();
        for (i, frame) in r.reassemble().frames().iter().enumerate() {
            assert_eq!(*frame, all.frame(t - 1 - i));
        }
        for j in 0..3 {
            assert_eq!(r.preceding.frame(j), c.following.frame(2 - j));
        }
        // motion direction actually changes
        assert_ne!(r.preceding, c.preceding);
    }

    #[test]
    fn flip_matches_pixel_map() {
        let c = moving_clip();
        let f = flip_horizontal(&c);
        let (a, b) = (c.middle.tensor().data(), f.middle.tensor().data());
        for row in 0..3 * 12 {
            for col in 0..12 {
                assert_eq!(b[row * 12 + col], a[row * 12 + 11 - col]);
            }
        }
    }

    #[test]
    fn all_four_outcomes_occur() {
        let c = moving_clip();
        let mut seen = std::collections::HashSet::new();
        for seed in 0..64 {
            let a = augment(&c, seed);
            let flipped = a.preceding.frame(0) != c.preceding.frame(0) && a.preceding.frame(0) != c.following.frame(2);
            let reversed = a.middle.frame(0) == c.middle.frame(2) || a.middle.frame(0) == flip_horizontal(&c).middle.frame(2);
            seen.insert((flipped, reversed));
        }
        assert_eq!(seen.len(), 4);
    }

    proptest! {
        #[test]
        fn augment_preserves_range_sums_and_frames(seed in any::<u64>(), values in prop::collection::vec(0.0f64..=1.0, 6 * 2 * 5)) {
            let frames: Vec<Tensor> = values.chunks(10).map(|c| Tensor::new(&[1, 2, 5], c.to_vec()).unwrap()).collect();
            let clip = split_clip(&FrameSequence::from_frames(&frames).unwrap(), 2, 2, 2).unwrap();
            let out = augment(&clip, seed);
            let all = out.reassemble();
            prop_assert!(all.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
            // flip keeps each frame's pixel multiset, reversal permutes frames
            let sums_in: Vec<f64> = clip.reassemble().frames().iter().map(|f| { let mut d = f.data().to_vec(); d.sort_by(f64::total_cmp); d.iter().sum() }).collect();
            let sums_out: Vec<f64> = all.frames().iter().map(|f| { let mut d = f.data().to_vec(); d.sort_by(f64::total_cmp); d.iter().sum() }).collect();
            let mut a: Vec<u64> = sums_in.iter().map(|v| v.to_bits()).collect();
            let mut b: Vec<u64> = sums_out.iter().map(|v| v.to_bits()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
