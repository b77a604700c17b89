//! Binary training checkpoints.
//!
//! Layout (all integers little-endian `u64` unless noted):
//! `MIDGAP01` magic, `u32` format version, the config text, the completed
//! iteration count, a length-prefixed manifest with one
//! `section name shape offset` line per tensor (offset in bytes from the start
//! of the value block), every tensor's values as little-endian `f64` in manifest
//! order, both optimizer step counters and the loss trace.
//!
//! Training samples clips from a stream derived from `(seed, iteration)`, so
//! the echoed seed plus the iteration count is the complete random state.

use std::fs;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::harness::config::Config;
use crate::harness::model::Model;
use crate::harness::train::Trainer;
use crate::nn::{Entry, ParamStore};
use crate::objectives::LossReport;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MIDGAP01";
pub const VERSION: u32 = 1;

/// Decoded contents of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub iteration: usize,
    /// `(section, entry)` pairs in file order.
    pub tensors: Vec<(String, Entry)>,
    pub adam_steps: [u64; 2],
    pub trace: Vec<LossReport>,
}

fn sections(t: &Trainer) -> Vec<(&'static str, Vec<Entry>)> {
    let adam = |store: &ParamStore, moments: &[Tensor]| -> Vec<Entry> {
        store.params().iter().zip(moments).map(|(e, m)| Entry { name: e.name.clone(), value: m.clone() }).collect()
    };
    vec![
        ("generator", t.model.store.params().to_vec()),
        ("generator.buffer", t.model.store.buffers().to_vec()),
        ("discriminator", t.disc_store.params().to_vec()),
        ("discriminator.buffer", t.disc_store.buffers().to_vec()),
        ("adam.generator.first", adam(&t.model.store, &t.opt_g.first)),
        ("adam.generator.second", adam(&t.model.store, &t.opt_g.second)),
        ("adam.discriminator.first", adam(&t.disc_store, &t.opt_d.first)),
        ("adam.discriminator.second", adam(&t.disc_store, &t.opt_d.second)),
    ]
}

fn shape_text(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_text(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

/// Serializes the complete trainer state.
pub fn encode(t: &Trainer) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_text(&mut out, &t.config.to_text());
    put_u64(&mut out, t.iteration as u64);
    let secs = sections(t);
    let mut manifest = String::new();
    let mut offset = 0;
    for (sec, entries) in &secs {
        for e in entries {
            manifest.push_str(&format!("{sec} {} {} {offset}\n", e.name, shape_text(e.value.shape())));
            offset += 8 * e.value.len();
        }
    }
    put_text(&mut out, &manifest);
    for (_, entries) in &secs {
        for e in entries {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    put_u64(&mut out, t.opt_g.step);
    put_u64(&mut out, t.opt_d.step);
    put_u64(&mut out, t.trace.len() as u64);
    for r in &t.trace {
        for v in [r.l2, r.gdl, r.img_forward, r.img_backward, r.img_final, r.gan, r.total_g, r.total_d] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(t: &Trainer, path: &Path) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|&n| n <= self.bytes.len()).ok_or_else(|| Error::Format(format!("implausible length {n}")))
    }

    fn text(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint text is not UTF-8".into()))
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    if s == "scalar" {
        return Ok(Vec::new());
    }
    s.split('x').map(|d| d.parse().map_err(|_| Error::Format(format!("bad shape {s:?}")))).collect()
}

/// Parses a checkpoint without applying it anywhere.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&MAGIC[..]) {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = Config::parse(&r.text()?)?;
    let iteration = r.len()?;
    let manifest = r.text()?;
    let mut heads = Vec::new();
    let mut expected_offset = 0;
    for line in manifest.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        let [sec, name, shape, offset] = parts[..] else {
            return Err(Error::Format(format!("bad manifest line {line:?}")));
        };
        let shape = parse_shape(shape)?;
        if offset.parse::<usize>().ok() != Some(expected_offset) {
            return Err(Error::Format(format!("manifest offset {offset} for {name}, expected {expected_offset}")));
        }
        expected_offset += 8 * shape.iter().product::<usize>();
        heads.push((sec.to_string(), name.to_string(), shape));
    }
    let mut tensors = Vec::with_capacity(heads.len());
    for (sec, name, shape) in heads {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
        tensors.push((sec, Entry { name, value: Tensor::new(&shape, data)? }));
    }
    let adam_steps = [r.u64()?, r.u64()?];
    let count = r.len()?;
    let mut trace = Vec::with_capacity(count);
    for _ in 0..count {
        let v: Vec<f64> = (0..8).map(|_| r.f64()).collect::<Result<_>>()?;
        trace.push(LossReport {
            l2: v[0],
            gdl: v[1],
            img_forward: v[2],
            img_backward: v[3],
            img_final: v[4],
            gan: v[5],
            total_g: v[6],
            total_d: v[7],
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { config, iteration, tensors, adam_steps, trace })
}

pub fn read(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl Checkpoint {
    fn section(&self, name: &str) -> Vec<Entry> {
        self.tensors.iter().filter(|(s, _)| s == name).map(|(_, e)| e.clone()).collect()
    }

    /// Loads the generator weights into `model`, which must have the same
    /// variant and tensor layout. Nothing is modified on mismatch.
    pub fn apply_to_model(&self, model: &mut Model) -> Result<()> {
        if self.config.variant != model.variant {
            return Err(Error::Config(format!(
                "checkpoint holds a {} model, not {}",
                self.config.variant.name(),
                model.variant.name()
            )));
        }
        model.store.load_entries(&self.section("generator"), &self.section("generator.buffer"))
    }

    /// Restores the complete training state. Every tensor is checked before
    /// anything is written.
    pub fn restore(&self, t: &mut Trainer) -> Result<()> {
        if self.config.variant != t.config.variant {
            return Err(Error::Config(format!("checkpoint holds a {} model, not {}", self.config.variant.name(), t.config.variant.name())));
        }
        let expected = sections(t);
        let mut staged = Vec::new();
        for (sec, entries) in &expected {
            let found = self.section(sec);
            if found.len() != entries.len() {
                return Err(shape_err!("section {sec}: expected {} tensors, found {}", entries.len(), found.len()));
            }
            for (a, b) in entries.iter().zip(&found) {
                if a.name != b.name || a.value.shape() != b.value.shape() {
                    return Err(shape_err!("{sec}: expected {} {:?}, found {} {:?}", a.name, a.value.shape(), b.name, b.value.shape()));
                }
            }
            staged.push(found);
        }
        let [g, gb, d, db, gm, gv, dm, dv]: [Vec<Entry>; 8] = staged.try_into().expect("eight sections");
        t.model.store.load_entries(&g, &gb)?;
        t.disc_store.load_entries(&d, &db)?;
        let values = |e: Vec<Entry>| e.into_iter().map(|x| x.value).collect::<Vec<_>>();
        t.opt_g.first = values(gm);
        t.opt_g.second = values(gv);
        t.opt_d.first = values(dm);
        t.opt_d.second = values(dv);
        t.opt_g.step = self.adam_steps[0];
        t.opt_d.step = self.adam_steps[1];
        t.iteration = self.iteration;
        t.trace = self.trace.clone();
        Ok(())
    }

    /// A trainer in exactly the saved state, built from the echoed config.
    pub fn into_trainer(self) -> Result<Trainer> {
        let mut t = Trainer::new(self.config.clone())?;
        self.restore(&mut t)?;
        Ok(t)
    }
}

/// Builds the model described by `config` and loads the checkpoint's weights.
pub fn load_model(config: &Config, path: &Path) -> Result<Model> {
    let ckpt = read(path)?;
    let mut model = Model::new(config.variant, &config.arch, 0)?;
    ckpt.apply_to_model(&mut model)?;
    Ok(model)
}
