//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::arch::ArchConfig;
use crate::baselines::BaselineKind;
use crate::data::SceneRanges;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::objectives::LossWeights;

/// Which inpainting model a run trains or evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Learned time-aware blending of both predictions.
    Tai,
    /// Time-agnostic kernels with a fixed time-weighted average.
    Twi,
    /// Time-weighted average of both predictions.
    BiTw,
    /// Plain average of both predictions.
    BiSa,
    /// The predictor run forward from the preceding frames only.
    ForwardOnly,
    /// A weight-free baseline.
    Handcrafted(BaselineKind),
}

impl Variant {
    pub const TRAINABLE: [Variant; 5] = [Variant::Tai, Variant::Twi, Variant::BiTw, Variant::BiSa, Variant::ForwardOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tai => "tai",
            Variant::Twi => "twi",
            Variant::BiTw => "bi_tw",
            Variant::BiSa => "bi_sa",
            Variant::ForwardOnly => "forward_only",
            Variant::Handcrafted(BaselineKind::RepeatP) => "repeat_p",
            Variant::Handcrafted(BaselineKind::RepeatF) => "repeat_f",
            Variant::Handcrafted(BaselineKind::SaPF) => "sa_pf",
            Variant::Handcrafted(BaselineKind::TwPF) => "tw_pf",
            // the bidirectional baselines are trained models
            Variant::Handcrafted(BaselineKind::BiSa) => "bi_sa",
            Variant::Handcrafted(BaselineKind::BiTw) => "bi_tw",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix("handcrafted:").unwrap_or(s);
        Ok(match s {
            "tai" => Variant::Tai,
            "twi" => Variant::Twi,
            "bi_tw" => Variant::BiTw,
            "bi_sa" => Variant::BiSa,
            "forward_only" => Variant::ForwardOnly,
            "repeat_p" => Variant::Handcrafted(BaselineKind::RepeatP),
            "repeat_f" => Variant::Handcrafted(BaselineKind::RepeatF),
            "sa_pf" => Variant::Handcrafted(BaselineKind::SaPF),
            "tw_pf" => Variant::Handcrafted(BaselineKind::TwPF),
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        })
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, Variant::Handcrafted(_))
    }

    /// Whether the variant runs the predictor in both directions.
    pub fn is_bidirectional(self) -> bool {
        matches!(self, Variant::Tai | Variant::Twi | Variant::BiTw | Variant::BiSa)
    }
}

/// Where clips come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Bouncing shapes generated from `data_seed`.
    Synthetic,
    /// A manifest file listing frame folders.
    Manifest(String),
}

impl DataSource {
    fn parse(s: &str) -> Self {
        if s == "synthetic" {
            DataSource::Synthetic
        } else {
            DataSource::Manifest(s.to_string())
        }
    }

    fn text(&self) -> String {
        match self {
            DataSource::Synthetic => "synthetic".into(),
            DataSource::Manifest(p) => p.clone(),
        }
    }
}

/// Every setting of one experiment. All fields have defaults (the synthetic
/// preset); files and flags override individual keys.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub variant: Variant,
    pub p: usize,
    pub m: usize,
    pub f: usize,
    /// Middle frames predicted at test time.
    pub test_middle: usize,
    pub test_stride: usize,
    pub train_data: DataSource,
    pub test_data: DataSource,
    pub data_seed: u64,
    pub train_videos: usize,
    pub test_videos: usize,
    pub video_length: usize,
    pub scene: SceneRanges,
    pub loss: LossWeights,
    pub optimizer: AdamConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub d_steps: usize,
    /// Reuse the generator-step fake for the discriminator step.
    pub reuse_fake: bool,
    pub power_iterations: usize,
    pub augment: bool,
    pub paper_faithful: bool,
    pub arch: ArchConfig,
    pub disc_widths: Vec<usize>,
    pub lipschitz: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self::synthetic()
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_list<const N: usize>(key: &str, v: &str) -> Result<[usize; N]> {
    let items = parse_vec(key, v)?;
    items.try_into().map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated values")))
}

fn parse_vec(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

impl Config {
    /// Desk-scale defaults: 32×32 grayscale bouncing shapes, p = m = f = 3.
    pub fn synthetic() -> Self {
        Config {
            variant: Variant::Tai,
            p: 3,
            m: 3,
            f: 3,
            test_middle: 5,
            test_stride: 5,
            train_data: DataSource::Synthetic,
            test_data: DataSource::Synthetic,
            data_seed: 7,
            train_videos: 64,
            test_videos: 16,
            video_length: 24,
            scene: SceneRanges::default(),
            loss: LossWeights::default(),
            optimizer: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            iterations: 1000,
            batch_size: 4,
            seed: 1,
            checkpoint_every: 0,
            d_steps: 1,
            reuse_fake: false,
            power_iterations: 1,
            augment: true,
            paper_faithful: false,
            arch: ArchConfig::desk(),
            disc_widths: vec![8, 16, 16, 16],
            lipschitz: 3.0,
        }
    }

    /// The published training setup (5/5/5 clips, 10 test middle frames,
    /// 100k iterations, batch 4, learning rate 1e-4, full widths) on
    /// 128×128 grayscale frame folders listed in `data/kth/*.txt`.
    pub fn kth() -> Self {
        let mut c = Self::synthetic();
        c.p = 5;
        c.m = 5;
        c.f = 5;
        c.test_middle = 10;
        c.test_stride = 10;
        c.train_data = DataSource::Manifest("data/kth/train.txt".into());
        c.test_data = DataSource::Manifest("data/kth/test.txt".into());
        c.video_length = 40;
        c.scene.height = 128;
        c.scene.width = 128;
        c.optimizer = AdamConfig::default();
        c.iterations = 100_000;
        c.checkpoint_every = 5000;
        c.paper_faithful = true;
        c.arch = ArchConfig::paper_faithful();
        c.disc_widths = vec![64, 128, 256, 512];
        c
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let a = &mut self.arch;
        match key {
            "variant" => self.variant = Variant::parse(v)?,
            "p" => self.p = parse_num(key, v)?,
            "m" => self.m = parse_num(key, v)?,
            "f" => self.f = parse_num(key, v)?,
            "test_middle" => self.test_middle = parse_num(key, v)?,
            "test_stride" => self.test_stride = parse_num(key, v)?,
            "train_data" => self.train_data = DataSource::parse(v),
            "test_data" => self.test_data = DataSource::parse(v),
            "data_seed" => self.data_seed = parse_num(key, v)?,
            "train_videos" => self.train_videos = parse_num(key, v)?,
            "test_videos" => self.test_videos = parse_num(key, v)?,
            "video_length" => self.video_length = parse_num(key, v)?,
            "channels" => {
                self.scene.channels = parse_num(key, v)?;
                a.channels = self.scene.channels;
            }
            "height" => self.scene.height = parse_num(key, v)?,
            "width" => self.scene.width = parse_num(key, v)?,
            "objects" => (self.scene.objects.0, self.scene.objects.1) = parse_list::<2>(key, v)?.into(),
            "object_size" => (self.scene.size.0, self.scene.size.1) = parse_list::<2>(key, v)?.into(),
            "speed" => {
                let [lo, hi] = parse_list::<2>(key, v)?;
                self.scene.speed = (lo as i64, hi as i64);
            }
            "alpha" => self.loss.alpha = parse_num(key, v)?,
            "beta" => self.loss.beta = parse_num(key, v)?,
            "lr" => self.optimizer.lr = parse_num(key, v)?,
            "adam_beta1" => self.optimizer.beta1 = parse_num(key, v)?,
            "adam_beta2" => self.optimizer.beta2 = parse_num(key, v)?,
            "adam_eps" => self.optimizer.eps = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "d_steps" => self.d_steps = parse_num(key, v)?,
            "reuse_fake" => self.reuse_fake = parse_bool(key, v)?,
            "power_iterations" => self.power_iterations = parse_num(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "paper_faithful" => {
                self.paper_faithful = parse_bool(key, v)?;
                if self.paper_faithful {
                    let channels = a.channels;
                    *a = ArchConfig::paper_faithful();
                    a.channels = channels;
                }
            }
            "kernel_size" => a.kernel_size = parse_num(key, v)?,
            "pred_encoder" => a.pred_encoder = parse_list(key, v)?,
            "pred_hidden" => a.pred_hidden = parse_num(key, v)?,
            "pred_top" => a.pred_top = parse_num(key, v)?,
            "deep_width" => a.deep_width = parse_num(key, v)?,
            "blend_encoder" => a.blend_encoder = parse_list(key, v)?,
            "blend_decoder" => a.blend_decoder = parse_list(key, v)?,
            "head_width" => a.head_width = parse_num(key, v)?,
            "convs_per_block" => a.convs_per_block = parse_num(key, v)?,
            "disc_widths" => self.disc_widths = parse_vec(key, v)?,
            "lipschitz" => self.lipschitz = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.p == 0 || self.m == 0 || self.f == 0 || self.test_middle == 0 {
            return bad(format!("p, m, f and test_middle must be positive (got {}, {}, {}, {})", self.p, self.m, self.f, self.test_middle));
        }
        if self.batch_size == 0 || self.test_stride == 0 || self.d_steps == 0 {
            return bad("batch_size, test_stride and d_steps must be positive".into());
        }
        if self.loss.alpha < 0.0 || self.loss.beta < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        if !(self.optimizer.lr > 0.0) {
            return bad("learning rate must be positive".into());
        }
        let (h, w) = (self.scene.height, self.scene.width);
        let needed = if self.variant.is_bidirectional() && matches!(self.variant, Variant::Tai | Variant::Twi) { 32 } else { 8 };
        if self.variant.is_trainable() && (h % needed != 0 || w % needed != 0) {
            return bad(format!("{} needs frame sides divisible by {needed}, got {h}×{w}", self.variant.name()));
        }
        if self.variant.is_trainable() && (h % (1 << self.disc_widths.len()) != 0 || w % (1 << self.disc_widths.len()) != 0) {
            return bad(format!("{h}×{w} frames cannot pass {} stride-2 discriminator layers", self.disc_widths.len()));
        }
        if self.arch.channels != self.scene.channels {
            return bad("architecture and scene channel counts differ".into());
        }
        if self.scene.objects.0 > self.scene.objects.1 || self.scene.size.0 > self.scene.size.1 || self.scene.speed.0 > self.scene.speed.1 {
            return bad("scene ranges must be ordered low,high".into());
        }
        self.arch.validate()
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let a = &self.arch;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("variant", self.variant.name().into());
        kv("p", self.p.to_string());
        kv("m", self.m.to_string());
        kv("f", self.f.to_string());
        kv("test_middle", self.test_middle.to_string());
        kv("test_stride", self.test_stride.to_string());
        kv("train_data", self.train_data.text());
        kv("test_data", self.test_data.text());
        kv("data_seed", self.data_seed.to_string());
        kv("train_videos", self.train_videos.to_string());
        kv("test_videos", self.test_videos.to_string());
        kv("video_length", self.video_length.to_string());
        kv("channels", self.scene.channels.to_string());
        kv("height", self.scene.height.to_string());
        kv("width", self.scene.width.to_string());
        kv("objects", format!("{},{}", self.scene.objects.0, self.scene.objects.1));
        kv("object_size", format!("{},{}", self.scene.size.0, self.scene.size.1));
        kv("speed", format!("{},{}", self.scene.speed.0, self.scene.speed.1));
        kv("alpha", format!("{:?}", self.loss.alpha));
        kv("beta", format!("{:?}", self.loss.beta));
        kv("lr", format!("{:?}", self.optimizer.lr));
        kv("adam_beta1", format!("{:?}", self.optimizer.beta1));
        kv("adam_beta2", format!("{:?}", self.optimizer.beta2));
        kv("adam_eps", format!("{:?}", self.optimizer.eps));
        kv("iterations", self.iterations.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv("d_steps", self.d_steps.to_string());
        kv("reuse_fake", self.reuse_fake.to_string());
        kv("power_iterations", self.power_iterations.to_string());
        kv("augment", self.augment.to_string());
        kv("paper_faithful", self.paper_faithful.to_string());
        kv("kernel_size", a.kernel_size.to_string());
        kv("pred_encoder", list(&a.pred_encoder));
        kv("pred_hidden", a.pred_hidden.to_string());
        kv("pred_top", a.pred_top.to_string());
        kv("deep_width", a.deep_width.to_string());
        kv("blend_encoder", list(&a.blend_encoder));
        kv("blend_decoder", list(&a.blend_decoder));
        kv("head_width", a.head_width.to_string());
        kv("convs_per_block", a.convs_per_block.to_string());
        kv("disc_widths", list(&self.disc_widths));
        kv("lipschitz", format!("{:?}", self.lipschitz));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        for c in [Config::synthetic(), Config::kth()] {
            assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        }
        let mut c = Config::synthetic();
        c.variant = Variant::Handcrafted(BaselineKind::TwPF);
        c.train_data = DataSource::Manifest("clips/train.txt".into());
        c.loss.beta = 0.0;
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_overrides_and_unknown_keys() {
        let c = Config::parse("# preset\nvariant = twi  # ablation\niterations=12\n\n").unwrap();
        assert_eq!((c.variant, c.iterations), (Variant::Twi, 12));
        assert!(matches!(Config::parse("colour = red"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("p = three"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("m = 0"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("just words"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("height = 24"), Err(Error::Config(_))));
        assert_eq!(Config::parse("variant = handcrafted:repeat_p\nheight = 24").unwrap().scene.height, 24);
    }

    #[test]
    fn test_middle_may_exceed_training_middle() {
        let c = Config::parse("m = 3\ntest_middle = 6").unwrap();
        assert_eq!((c.m, c.test_middle), (3, 6));
    }

    #[test]
    fn paper_faithful_flag_selects_published_widths() {
        let c = Config::parse("paper_faithful = true").unwrap();
        assert_eq!(c.arch, ArchConfig::paper_faithful());
    }

    #[test]
    fn shipped_presets_match() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        assert_eq!(Config::load(&root.join("synthetic.cfg")).unwrap(), Config::synthetic());
        assert_eq!(Config::load(&root.join("kth.cfg")).unwrap(), Config::kth());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::TRAINABLE {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        for k in [BaselineKind::RepeatP, BaselineKind::RepeatF, BaselineKind::SaPF, BaselineKind::TwPF] {
            let v = Variant::Handcrafted(k);
            assert_eq!(Variant::parse(&format!("handcrafted:{}", v.name())).unwrap(), v);
        }
    }
}
