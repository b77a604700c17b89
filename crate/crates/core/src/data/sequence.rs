use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Frames `T×C×H×W` with pixel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Tensor,
}

impl FrameSequence {
    pub fn new(frames: Tensor) -> Result<Self> {
        if frames.shape().len() != 4 {
            return Err(shape_err!("frame sequence must be T×C×H×W, got {:?}", frames.shape()));
        }
        if let Some(v) = frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(FrameSequence { frames })
    }

    /// Stacks `C×H×W` frames. Values are clamped into `[0, 1]`.
    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        let stacked = Tensor::stack(frames)?;
        Self::new(stacked.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(C, H, W)` of each frame.
    pub fn frame_shape(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[1], s[2], s[3])
    }

    pub fn frame(&self, t: usize) -> Tensor {
        self.frames.index_outer(t)
    }

    pub fn frames(&self) -> Vec<Tensor> {
        (0..self.len()).map(|t| self.frame(t)).collect()
    }

    pub fn first(&self) -> Tensor {
        self.frame(0)
    }

    pub fn last(&self) -> Tensor {
        self.frame(self.len() - 1)
    }

    /// Frames `start..end` (0-based, end exclusive).
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(shape_err!("slice {start}..{end} of {} frames", self.len()));
        }
        let inner: usize = self.frames.shape()[1..].iter().product();
        let mut shape = self.frames.shape().to_vec();
        shape[0] = end - start;
        let data = self.frames.data()[start * inner..end * inner].to_vec();
        Ok(FrameSequence { frames: Tensor::new(&shape, data)? })
    }

    pub fn concat(parts: &[&FrameSequence]) -> Result<Self> {
        let frames: Vec<Tensor> = parts.iter().flat_map(|p| p.frames()).collect();
        Ok(FrameSequence { frames: Tensor::stack(&frames)? })
    }

    pub fn reversed(&self) -> Self {
        let mut frames = self.frames();
        frames.reverse();
        FrameSequence { frames: Tensor::stack(&frames).expect("non-empty") }
    }

    /// Mirrors every frame left-to-right.
    pub fn flipped_horizontally(&self) -> Self {
        let (_, _, w) = self.frame_shape();
        let mut out = self.frames.clone();
        for row in out.data_mut().chunks_mut(w) {
            row.reverse();
        }
        FrameSequence { frames: out }
    }
}

/// A clip split into preceding, middle and following frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipTriplet {
    pub preceding: FrameSequence,
    pub middle: FrameSequence,
    pub following: FrameSequence,
}

impl ClipTriplet {
    pub fn p(&self) -> usize {
        self.preceding.len()
    }

    pub fn m(&self) -> usize {
        self.middle.len()
    }

    pub fn f(&self) -> usize {
        self.following.len()
    }

    /// Concatenation `[P, M, F]`.
    pub fn reassemble(&self) -> FrameSequence {
        FrameSequence::concat(&[&self.preceding, &self.middle, &self.following]).expect("consistent frames")
    }

    /// The last preceding frame `v_p`.
    pub fn last_preceding(&self) -> Tensor {
        self.preceding.last()
    }

    /// The first following frame `v_{p+m+1}`.
    pub fn first_following(&self) -> Tensor {
        self.following.first()
    }

    /// Keeps only the `context` frames nearest the middle on each side.
    pub fn with_context(&self, context: usize) -> Result<Self> {
        if context == 0 || context > self.p() || context > self.f() {
            return Err(Error::Range(format!(
                "context {context} not available (p = {}, f = {})",
                self.p(),
                self.f()
            )));
        }
        Ok(ClipTriplet {
            preceding: self.preceding.slice(self.p() - context, self.p())?,
            middle: self.middle.clone(),
            following: self.following.slice(0, context)?,
        })
    }
}

/// Splits `frames` into `p` preceding, `m` middle and `f` following frames.
pub fn split_clip(frames: &FrameSequence, p: usize, m: usize, f: usize) -> Result<ClipTriplet> {
    if p == 0 || m == 0 || f == 0 {
        return Err(Error::Split(format!("counts must be positive, got p={p} m={m} f={f}")));
    }
    if p + m + f != frames.len() {
        return Err(Error::Split(format!("p+m+f = {} but clip has {} frames", p + m + f, frames.len())));
    }
    Ok(ClipTriplet {
        preceding: frames.slice(0, p)?,
        middle: frames.slice(p, p + m)?,
        following: frames.slice(p + m, p + m + f)?,
    })
}

/// Sliding windows of `p + m + f` frames starting at `0, s, 2s, …` while they fit.
pub fn make_test_windows(video: &FrameSequence, p: usize, m: usize, f: usize, stride: usize) -> Result<Vec<ClipTriplet>> {
    if stride == 0 {
        return Err(Error::Range("window stride must be positive".into()));
    }
    let span = p + m + f;
    let mut out = Vec::new();
    let mut start = 0;
    while start + span <= video.len() {
        out.push(split_clip(&video.slice(start, start + span)?, p, m, f)?);
        start += stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Frame `t` is filled with `t / 100`.
    fn numbered(t: usize) -> FrameSequence {
        let frames: Vec<Tensor> = (0..t).map(|i| Tensor::full(&[1, 2, 3], i as f64 / 100.0)).collect();
        FrameSequence::from_frames(&frames).unwrap()
    }

    fn ids(seq: &FrameSequence) -> Vec<usize> {
        seq.frames().iter().map(|f| (f.data()[0] * 100.0).round() as usize).collect()
    }

    #[test]
    fn five_five_five_split() {
        let c = split_clip(&numbered(15), 5, 5, 5).unwrap();
        // 1-indexed frames 6..10
        assert_eq!(ids(&c.middle), vec![5, 6, 7, 8, 9]);
        assert_eq!(ids(&c.preceding), vec![0, 1, 2, 3, 4]);
        assert_eq!(ids(&c.following), vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn singleton_split_and_reassembly() {
        let v = numbered(3);
        let c = split_clip(&v, 1, 1, 1).unwrap();
        assert_eq!((c.p(), c.m(), c.f()), (1, 1, 1));
        assert_eq!(c.reassemble(), v);
        let v = numbered(9);
        assert_eq!(split_clip(&v, 2, 4, 3).unwrap().reassemble(), v);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_clip(&numbered(9), 3, 3, 2), Err(Error::Split(_))));
        assert!(matches!(split_clip(&numbered(9), 0, 6, 3), Err(Error::Split(_))));
    }

    fn window_starts(t: usize, p: usize, m: usize, f: usize, s: usize) -> Vec<usize> {
        make_test_windows(&numbered(t), p, m, f, s).unwrap().iter().map(|c| ids(&c.preceding)[0]).collect()
    }

    #[test]
    fn windows_examples() {
        assert_eq!(window_starts(30, 5, 10, 5, 10), vec![0, 10]);
        assert_eq!(window_starts(20, 5, 10, 5, 10), vec![0]);
        assert!(window_starts(19, 5, 10, 5, 10).is_empty());
    }

    #[test]
    fn windows_match_enumeration() {
        for t in 1..40 {
            for s in 1..6 {
                let (p, m, f) = (3, 4, 2);
                let expected: Vec<usize> = (0..t).filter(|st| st % s == 0 && st + p + m + f <= t).collect();
                assert_eq!(window_starts(t, p, m, f, s), expected, "t={t} s={s}");
            }
        }
        // T=26, T'=20, s=3 → starts 1, 4, 7 (1-indexed)
        assert_eq!(window_starts(26, 5, 10, 5, 3), vec![0, 3, 6]);
    }

    #[test]
    fn context_truncation() {
        let c = split_clip(&numbered(13), 5, 3, 5).unwrap();
        let t = c.with_context(2).unwrap();
        assert_eq!(ids(&t.preceding), vec![3, 4]);
        assert_eq!(ids(&t.following), vec![8, 9]);
        assert_eq!(c.with_context(5).unwrap(), c);
        assert!(matches!(c.with_context(6), Err(Error::Range(_))));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(FrameSequence::new(Tensor::full(&[1, 1, 2, 2], 1.5)).is_err());
    }
}
