//! Bouncing-shape video with exact integer kinematics.

use rand::Rng;

use crate::data::sequence::FrameSequence;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub kind: ShapeKind,
    /// Side length (square) or diameter (disc), in pixels.
    pub size: usize,
    /// Top-left corner of the bounding box at `t = 0`.
    pub x: i64,
    pub y: i64,
    /// Pixels per frame.
    pub vx: i64,
    pub vy: i64,
    /// One value per channel, in `[0, 1]`.
    pub color: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

/// Ranges for randomly drawn scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRanges {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub objects: (usize, usize),
    pub size: (usize, usize),
    pub speed: (i64, i64),
    pub intensity: (f64, f64),
}

impl Default for SceneRanges {
    fn default() -> Self {
        SceneRanges {
            channels: 1,
            height: 32,
            width: 32,
            objects: (1, 2),
            size: (6, 10),
            speed: (1, 2),
            intensity: (0.5, 1.0),
        }
    }
}

/// Reflects an unbounded coordinate into `[0, limit]` (elastic walls).
pub fn fold(pos: i64, limit: i64) -> i64 {
    if limit == 0 {
        return 0;
    }
    let period = 2 * limit;
    let r = pos.rem_euclid(period);
    if r > limit {
        period - r
    } else {
        r
    }
}

impl SceneObject {
    /// Top-left corner at frame `t` inside a `height×width` canvas.
    pub fn position(&self, t: usize, height: usize, width: usize) -> (i64, i64) {
        let lx = (width - self.size) as i64;
        let ly = (height - self.size) as i64;
        (fold(self.x + self.vx * t as i64, lx), fold(self.y + self.vy * t as i64, ly))
    }

    fn covers(&self, ox: i64, oy: i64, row: usize, col: usize) -> bool {
        let (dx, dy) = (col as i64 - ox, row as i64 - oy);
        let s = self.size as i64;
        if dx < 0 || dy < 0 || dx >= s || dy >= s {
            return false;
        }
        match self.kind {
            ShapeKind::Square => true,
            ShapeKind::Disc => {
                let r = self.size as f64 / 2.0;
                let (cx, cy) = (dx as f64 + 0.5 - r, dy as f64 + 0.5 - r);
                cx * cx + cy * cy <= r * r
            }
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Spec("canvas must be non-empty".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.size == 0 || o.size > self.height || o.size > self.width {
                return Err(Error::Spec(format!("object {i} of size {} does not fit {}×{}", o.size, self.height, self.width)));
            }
            if o.x < 0 || o.y < 0 || o.x + o.size as i64 > self.width as i64 || o.y + o.size as i64 > self.height as i64 {
                return Err(Error::Spec(format!("object {i} starts outside the canvas")));
            }
            if o.color.len() != self.channels || o.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Spec(format!("object {i} needs {} colors in [0, 1]", self.channels)));
            }
        }
        Ok(())
    }

    /// Draws a scene inside `ranges`; identical seeds give identical scenes.
    pub fn random(ranges: &SceneRanges, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let n = rng.gen_range(ranges.objects.0..=ranges.objects.1);
        let objects = (0..n)
            .map(|_| {
                let size = rng.gen_range(ranges.size.0..=ranges.size.1.min(ranges.height).min(ranges.width));
                let kind = if rng.gen_bool(0.5) { ShapeKind::Square } else { ShapeKind::Disc };
                let x = rng.gen_range(0..=(ranges.width - size) as i64);
                let y = rng.gen_range(0..=(ranges.height - size) as i64);
                let draw_speed = |rng: &mut crate::rng::Rng| {
                    let s = rng.gen_range(ranges.speed.0..=ranges.speed.1);
                    if rng.gen_bool(0.5) {
                        -s
                    } else {
                        s
                    }
                };
                let vx = draw_speed(&mut rng);
                let vy = draw_speed(&mut rng);
                let color = (0..ranges.channels).map(|_| rng.gen_range(ranges.intensity.0..=ranges.intensity.1)).collect();
                SceneObject { kind, size, x, y, vx, vy, color }
            })
            .collect();
        SceneSpec { channels: ranges.channels, height: ranges.height, width: ranges.width, objects, seed }
    }

    pub fn render(&self, t: usize) -> Tensor {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut frame = Tensor::zeros(&[c, h, w]);
        for o in &self.objects {
            let (ox, oy) = o.position(t, h, w);
            for row in oy.max(0) as usize..((oy + o.size as i64) as usize).min(h) {
                for col in ox.max(0) as usize..((ox + o.size as i64) as usize).min(w) {
                    if o.covers(ox, oy, row, col) {
                        for ch in 0..c {
                            let px = &mut frame.data_mut()[(ch * h + row) * w + col];
                            *px = px.max(o.color[ch]);
                        }
                    }
                }
            }
        }
        frame
    }
}

/// Renders frames `0..length` of `spec`.
pub fn generate_clip(spec: &SceneSpec, length: usize) -> Result<FrameSequence> {
    if length == 0 {
        return Err(Error::Spec("clip length must be at least 1".into()));
    }
    spec.validate()?;
    let frames: Vec<Tensor> = (0..length).map(|t| spec.render(t)).collect();
    FrameSequence::from_frames(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sequence::split_clip;

    fn square(x: i64, y: i64, vx: i64, vy: i64, size: usize) -> SceneSpec {
        SceneSpec {
            channels: 1,
            height: 16,
            width: 16,
            objects: vec![SceneObject { kind: ShapeKind::Square, size, x, y, vx, vy, color: vec![1.0] }],
            seed: 0,
        }
    }

    fn left_edge(frame: &Tensor, w: usize) -> Option<usize> {
        (0..w).find(|&col| frame.data().chunks(w).any(|row| row[col] > 0.5))
    }

    #[test]
    fn constant_velocity_kinematics() {
        let clip = generate_clip(&square(2, 5, 1, 0, 4), 5).unwrap();
        assert_eq!(left_edge(&clip.frame(4), 16), Some(6));
    }

    #[test]
    fn zero_velocity_is_static() {
        let clip = generate_clip(&square(3, 3, 0, 0, 5), 6).unwrap();
        let first = clip.frame(0);
        assert!(clip.frames().iter().all(|f| *f == first));
    }

    /// One Euler step at a time, reflecting whenever a wall is crossed.
    fn euler_positions(x0: i64, v0: i64, limit: i64, steps: usize) -> Vec<i64> {
        let (mut x, mut v) = (x0, v0);
        let mut out = vec![x];
        for _ in 0..steps {
            x += v;
            if x < 0 {
                x = -x;
                v = -v;
            }
            if x > limit {
                x = 2 * limit - x;
                v = -v;
            }
            out.push(x);
        }
        out
    }

    #[test]
    fn reflection_matches_euler_oracle() {
        for (x0, v, size) in [(0, 2, 6), (10, 1, 6), (5, -2, 4), (1, -1, 15), (3, 2, 10)] {
            let spec = square(x0, 0, v, 0, size);
            let limit = (16 - size) as i64;
            let oracle = euler_positions(x0, v, limit, 60);
            for (t, &expected) in oracle.iter().enumerate() {
                assert_eq!(spec.objects[0].position(t, 16, 16).0, expected, "x0={x0} v={v} t={t}");
            }
            let clip = generate_clip(&spec, 40).unwrap();
            for t in 0..40 {
                assert_eq!(left_edge(&clip.frame(t), 16), Some(oracle[t] as usize));
            }
        }
    }

    #[test]
    fn oversized_object_is_rejected() {
        assert!(matches!(generate_clip(&square(0, 0, 1, 1, 17), 3), Err(Error::Spec(_))));
        assert!(matches!(generate_clip(&square(0, 0, 1, 1, 4), 0), Err(Error::Spec(_))));
    }

    #[test]
    fn seed_determinism_and_slicing() {
        let ranges = SceneRanges::default();
        let a = generate_clip(&SceneSpec::random(&ranges, 42), 9).unwrap();
        let b = generate_clip(&SceneSpec::random(&ranges, 42), 9).unwrap();
        assert!(a.tensor().data().iter().zip(b.tensor().data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        // ground-truth middle frames equal the full horizon sliced
        let c = split_clip(&a, 3, 3, 3).unwrap();
        for j in 0..3 {
            assert_eq!(c.middle.frame(j), SceneSpec::random(&ranges, 42).render(3 + j));
        }
    }

    #[test]
    fn random_scenes_fit() {
        let ranges = SceneRanges::default();
        for seed in 0..200 {
            let s = SceneSpec::random(&ranges, seed);
            s.validate().unwrap();
            assert!(s.objects.iter().all(|o| (1..=2).contains(&o.vx.abs()) && (1..=2).contains(&o.vy.abs())));
        }
    }

    #[test]
    fn disc_is_round() {
        let mut spec = square(0, 0, 0, 0, 8);
        spec.objects[0].kind = ShapeKind::Disc;
        let f = spec.render(0);
        let on: usize = f.data().iter().filter(|&&v| v > 0.0).count();
        assert!(on < 64 && on > 40, "{on}");
        assert_eq!(f.data()[0], 0.0);
        assert_eq!(f.data()[3 * 16 + 3], 1.0);
    }
}
