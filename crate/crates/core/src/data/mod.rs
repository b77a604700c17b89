//! Videos, clips, augmentation and frame-folder storage.

pub mod augment;
pub mod io;
pub mod sequence;
pub mod synthetic;

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive, seeded};

pub use augment::{augment, flip_horizontal, reverse_time};
pub use io::{load_frame_dir, read_manifest, save_frame_dir};
pub use sequence::{make_test_windows, split_clip, ClipTriplet, FrameSequence};
pub use synthetic::{generate_clip, SceneObject, SceneRanges, SceneSpec, ShapeKind};

/// A collection of whole videos from which clips and test windows are cut.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSet {
    videos: Vec<FrameSequence>,
}

impl VideoSet {
    pub fn new(videos: Vec<FrameSequence>) -> Result<Self> {
        if videos.is_empty() {
            return Err(Error::Data("video set is empty".into()));
        }
        let shape = videos[0].frame_shape();
        if let Some(v) = videos.iter().find(|v| v.frame_shape() != shape) {
            return Err(Error::Format(format!("frame shape {:?} differs from {:?}", v.frame_shape(), shape)));
        }
        Ok(VideoSet { videos })
    }

    /// `count` synthetic videos of `length` frames; video `i` uses scene seed `derive(seed, i)`.
    pub fn synthetic(ranges: &SceneRanges, count: usize, length: usize, seed: u64) -> Result<Self> {
        let videos = (0..count as u64)
            .map(|i| generate_clip(&SceneSpec::random(ranges, derive(seed, i)), length))
            .collect::<Result<Vec<_>>>()?;
        Self::new(videos)
    }

    /// Loads every clip directory named in a manifest file.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let videos = read_manifest(path)?.iter().map(|d| load_frame_dir(d)).collect::<Result<Vec<_>>>()?;
        Self::new(videos)
    }

    pub fn videos(&self) -> &[FrameSequence] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn frame_shape(&self) -> (usize, usize, usize) {
        self.videos[0].frame_shape()
    }

    /// A random `p + m + f` clip from a random video long enough to hold it.
    pub fn sample_clip(&self, p: usize, m: usize, f: usize, seed: u64) -> Result<ClipTriplet> {
        let span = p + m + f;
        let eligible: Vec<&FrameSequence> = self.videos.iter().filter(|v| v.len() >= span).collect();
        if eligible.is_empty() {
            return Err(Error::Data(format!("no video has the {span} frames a clip needs")));
        }
        let mut rng = seeded(seed);
        let video = eligible[rng.gen_range(0..eligible.len())];
        let start = rng.gen_range(0..=video.len() - span);
        split_clip(&video.slice(start, start + span)?, p, m, f)
    }

    /// Test windows of every video, in video order.
    pub fn windows(&self, p: usize, m: usize, f: usize, stride: usize) -> Result<Vec<ClipTriplet>> {
        let mut out = Vec::new();
        for v in &self.videos {
            out.extend(make_test_windows(v, p, m, f, stride)?);
        }
        Ok(out)
    }

    /// Writes `clip_NNNN/` frame folders plus a `manifest.txt` listing them.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut names = Vec::new();
        for (i, v) in self.videos.iter().enumerate() {
            let name = format!("clip_{i:04}");
            save_frame_dir(v, &dir.join(&name))?;
            names.push(name);
        }
        io::write_manifest(&dir.join("manifest.txt"), &names)
    }
}
