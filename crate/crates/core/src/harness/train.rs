//! Adversarial training: alternating generator and discriminator updates.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::autodiff::{Graph, Var};
use crate::data::{augment, ClipTriplet, VideoSet};
use crate::error::{Error, Result};
use crate::harness::checkpoint;
use crate::harness::config::Config;
use crate::harness::model::Model;
use crate::harness::pool;
use crate::nn::{Adam, ParamStore};
use crate::objectives::{discriminator_loss, generator_loss, Discriminator, LossReport};
use crate::rng::derive;
use crate::tensor::Tensor;

/// Stream indices under the run seed.
const GENERATOR_STREAM: u64 = 0;
const DISCRIMINATOR_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;

/// Everything that evolves during training. Restoring all of it from a
/// checkpoint makes the continuation bit-identical to an uninterrupted run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: Config,
    pub model: Model,
    pub disc_store: ParamStore,
    pub disc: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    /// Completed iterations; also the position in the sampling stream.
    pub iteration: usize,
    pub trace: Vec<LossReport>,
}

struct GeneratorPass {
    grads: Vec<Tensor>,
    report: LossReport,
    fake: Vec<Tensor>,
}

fn constants(g: &mut Graph, frames: Vec<Tensor>) -> Vec<Var> {
    frames.into_iter().map(|t| g.constant(t)).collect()
}

fn mean_grads(mut parts: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let n = parts.len() as f64;
    let mut acc = parts.remove(0);
    for grads in parts {
        for (a, b) in acc.iter_mut().zip(grads) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }
    for a in &mut acc {
        for x in a.data_mut() {
            *x /= n;
        }
    }
    acc
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        if !config.variant.is_trainable() {
            return Err(Error::Config(format!("{} has nothing to train", config.variant.name())));
        }
        let model = Model::new(config.variant, &config.arch, derive(config.seed, GENERATOR_STREAM))?;
        let mut disc_store = ParamStore::new(derive(config.seed, DISCRIMINATOR_STREAM));
        let s = &config.scene;
        let disc = Discriminator::new(
            &mut disc_store,
            "disc",
            config.p + config.m + config.f,
            s.channels,
            s.height,
            s.width,
            &config.disc_widths,
            config.lipschitz,
        )?;
        let opt_g = Adam::new(config.optimizer, &model.store);
        let opt_d = Adam::new(config.optimizer, &disc_store);
        Ok(Trainer { config, model, disc_store, disc, opt_g, opt_d, iteration: 0, trace: Vec::new() })
    }

    /// The training clips of iteration `it`, augmented if enabled.
    pub fn batch(&self, data: &VideoSet, it: usize) -> Result<Vec<ClipTriplet>> {
        let c = &self.config;
        let base = derive(derive(c.seed, SAMPLING_STREAM), it as u64);
        (0..c.batch_size as u64)
            .map(|b| {
                let clip = data.sample_clip(c.p, c.m, c.f, derive(base, 2 * b))?;
                Ok(if c.augment { augment(&clip, derive(base, 2 * b + 1)) } else { clip })
            })
            .collect()
    }

    fn generator_pass(&self, clip: &ClipTriplet) -> Result<GeneratorPass> {
        let mut g = Graph::new();
        let gb = self.model.store.bind(&mut g, true);
        let db = self.disc_store.bind(&mut g, false);
        let pre = constants(&mut g, clip.preceding.frames());
        let mid = constants(&mut g, clip.middle.frames());
        let fol = constants(&mut g, clip.following.frames());
        let out = self.model.run(&mut g, &gb, &pre, &fol, clip.m())?;
        let window: Vec<Var> = pre.iter().chain(&out.final_frames).chain(&fol).copied().collect();
        let d_fake = self.disc.forward(&mut g, &db, &self.disc_store, &window)?;
        let loss = generator_loss(
            &mut g,
            out.forward.as_deref(),
            out.backward.as_deref(),
            &out.final_frames,
            &mid,
            d_fake,
            self.config.loss,
        )?;
        g.backward(loss.total)?;
        let fake = out.final_frames.iter().map(|&v| g.value(v).clone()).collect();
        Ok(GeneratorPass { grads: gb.grads(&g), report: loss.report, fake })
    }

    fn discriminator_pass(&self, clip: &ClipTriplet, fake: Option<&[Tensor]>) -> Result<(Vec<Tensor>, f64)> {
        let mut g = Graph::new();
        let fake = match fake {
            Some(f) => f.to_vec(),
            None => {
                let gb = self.model.store.bind(&mut g, false);
                let pre = constants(&mut g, clip.preceding.frames());
                let fol = constants(&mut g, clip.following.frames());
                let out = self.model.run(&mut g, &gb, &pre, &fol, clip.m())?;
                out.final_frames.iter().map(|&v| g.value(v).clone()).collect()
            }
        };
        let mut g = Graph::new();
        let db = self.disc_store.bind(&mut g, true);
        let pre = constants(&mut g, clip.preceding.frames());
        let mid = constants(&mut g, clip.middle.frames());
        let fol = constants(&mut g, clip.following.frames());
        let fake = constants(&mut g, fake);
        let real: Vec<Var> = pre.iter().chain(&mid).chain(&fol).copied().collect();
        let forged: Vec<Var> = pre.iter().chain(&fake).chain(&fol).copied().collect();
        let d_real = self.disc.forward(&mut g, &db, &self.disc_store, &real)?;
        let d_fake = self.disc.forward(&mut g, &db, &self.disc_store, &forged)?;
        let loss = discriminator_loss(&mut g, d_real, d_fake)?;
        g.backward(loss)?;
        Ok((db.grads(&g), g.value(loss).item()))
    }

    fn diverged(&self, reason: impl Into<String>) -> Error {
        Error::TrainingDiverged { iteration: self.iteration, reason: reason.into() }
    }


    /// One generator update followed by `d_steps` discriminator updates.
    pub fn step(&mut self, data: &VideoSet) -> Result<LossReport> {
        let clips = self.batch(data, self.iteration)?;
        let iters = self.config.power_iterations;
        self.disc.power_iterate(&mut self.disc_store, iters);

        let passes: Vec<GeneratorPass> = pool().install(|| clips.par_iter().map(|c| self.generator_pass(c)).collect::<Result<_>>())?;
        let n = passes.len() as f64;
        let mut report = LossReport::default();
        for p in &passes {
            let r = &p.report;
            report.l2 += r.l2 / n;
            report.gdl += r.gdl / n;
            report.img_forward += r.img_forward / n;
            report.img_backward += r.img_backward / n;
            report.img_final += r.img_final / n;
            report.gan += r.gan / n;
            report.total_g += r.total_g / n;
        }
        if !report.total_g.is_finite() {
            return Err(self.diverged(format!("generator loss {}", report.total_g)));
        }
        let (grads, fakes): (Vec<_>, Vec<_>) = passes.into_iter().map(|p| (p.grads, p.fake)).unzip();
        let grads = mean_grads(grads);
        let it = self.iteration;
        apply(it, &mut self.opt_g, &mut self.model.store, &grads)?;

        for _ in 0..self.config.d_steps {
            let reuse = self.config.reuse_fake;
            let results: Vec<(Vec<Tensor>, f64)> = pool().install(|| {
                clips
                    .par_iter()
                    .zip(&fakes)
                    .map(|(c, f)| self.discriminator_pass(c, reuse.then_some(f.as_slice())))
                    .collect::<Result<_>>()
            })?;
            let (grads, losses): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            report.total_d = losses.iter().sum::<f64>() / n;
            if !report.total_d.is_finite() {
                return Err(self.diverged(format!("discriminator loss {}", report.total_d)));
            }
            let grads = mean_grads(grads);
            apply(it, &mut self.opt_d, &mut self.disc_store, &grads)?;
        }
        self.iteration += 1;
        self.trace.push(report);
        Ok(report)
    }

    /// Trains until `config.iterations`, checkpointing into `out` (when given)
    /// every `checkpoint_every` iterations and at the end.
    pub fn run(&mut self, data: &VideoSet, out: Option<&Path>) -> Result<()> {
        check_data(&self.config, data)?;
        let total = self.config.iterations;
        while self.iteration < total {
            let r = self.step(data)?;
            let every = self.config.checkpoint_every;
            if self.iteration % 50 == 0 || self.iteration == total {
                info!(
                    "iter {}/{total}: g {:.4} (img {:.4}, gan {:.4}) d {:.4}",
                    self.iteration, r.total_g, r.img_final, r.gan, r.total_d
                );
            }
            if let Some(dir) = out {
                if every > 0 && self.iteration % every == 0 && self.iteration < total {
                    self.save(dir)?;
                }
            }
        }
        if let Some(dir) = out {
            self.save(dir)?;
        }
        Ok(())
    }

    /// Writes `checkpoint.bin` and `trace.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("checkpoint.bin");
        checkpoint::save(self, &path)?;
        write_trace(&self.trace, &dir.join("trace.csv"))?;
        Ok(path)
    }
}

fn apply(iteration: usize, opt: &mut Adam, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
    opt.update(store, grads).map_err(|e| match e {
        Error::Optimizer(reason) => Error::TrainingDiverged { iteration, reason },
        other => other,
    })
}

/// Rejects data whose frames do not match the configured resolution.
pub fn check_data(config: &Config, data: &VideoSet) -> Result<()> {
    let s = &config.scene;
    let shape = data.frame_shape();
    if shape != (s.channels, s.height, s.width) {
        return Err(Error::Data(format!(
            "frames are {shape:?} but the config expects {:?}",
            (s.channels, s.height, s.width)
        )));
    }
    Ok(())
}

/// Trains a fresh model on `data`.
pub fn train(config: &Config, data: &VideoSet, out: Option<&Path>) -> Result<Trainer> {
    let mut t = Trainer::new(config.clone())?;
    t.run(data, out)?;
    Ok(t)
}

pub fn write_trace(trace: &[LossReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = ["iteration", "l2", "gdl", "img_forward", "img_backward", "img_final", "gan", "total_g", "total_d"];
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for (i, r) in trace.iter().enumerate() {
        let row = [r.l2, r.gdl, r.img_forward, r.img_backward, r.img_final, r.gan, r.total_g, r.total_d];
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}
