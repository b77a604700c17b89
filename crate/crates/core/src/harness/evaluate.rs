//! Per-timestep quality of a model over test windows, plus the context and
//! middle-length sweeps.

use rayon::prelude::*;

use crate::data::{ClipTriplet, VideoSet};
use crate::error::{shape_err, Error, Result};
use crate::harness::model::Model;
use crate::harness::pool;
use crate::metrics::{finite_mean, psnr, ssim};

/// Mean quality of the middle frame at absolute timestep `t` (`p+1..p+m`)
/// over `count` windows.
///
/// `psnr` averages finite values only; it is infinite when every frame at
/// this position was reproduced exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricPoint {
    pub t: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub model: String,
    pub dataset: String,
    pub points: Vec<MetricPoint>,
}

impl MetricSeries {
    /// SSIM averaged over every evaluated frame.
    pub fn mean_ssim(&self) -> f64 {
        let n: usize = self.points.iter().map(|p| p.count).sum();
        self.points.iter().map(|p| p.ssim * p.count as f64).sum::<f64>() / n as f64
    }

    /// PSNR averaged over the finite per-position means.
    pub fn mean_psnr(&self) -> f64 {
        let v: Vec<f64> = self.points.iter().map(|p| p.psnr).collect();
        finite_mean(&v).unwrap_or(f64::INFINITY)
    }
}

/// Scores `model` on every window; all windows must share one middle length.
pub fn evaluate(model: &Model, windows: &[ClipTriplet], name: &str, dataset: &str) -> Result<MetricSeries> {
    let first = windows.first().ok_or_else(|| Error::Data("no test windows".into()))?;
    let (p, m) = (first.p(), first.m());
    if let Some(w) = windows.iter().find(|w| (w.p(), w.m()) != (p, m)) {
        return Err(shape_err!("test windows mix layouts ({p}, {m}) and ({}, {})", w.p(), w.m()));
    }
    let scores: Vec<Vec<(f64, f64)>> = pool().install(|| {
        windows
            .par_iter()
            .map(|clip| {
                let pred = model.infer(clip)?;
                pred.iter()
                    .zip(clip.middle.frames())
                    .map(|(p, truth)| Ok((psnr(p, &truth)?, ssim(p, &truth)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()
    })?;
    let points = (0..m)
        .map(|j| {
            let ps: Vec<f64> = scores.iter().map(|s| s[j].0).collect();
            let ss: f64 = scores.iter().map(|s| s[j].1).sum();
            MetricPoint {
                t: p + 1 + j,
                psnr: finite_mean(&ps).unwrap_or(f64::INFINITY),
                ssim: ss / scores.len() as f64,
                count: scores.len(),
            }
        })
        .collect();
    Ok(MetricSeries { model: name.to_string(), dataset: dataset.to_string(), points })
}

/// Re-scores the same windows keeping only `c` context frames per side.
pub fn context_sweep(model: &Model, windows: &[ClipTriplet], contexts: &[usize], name: &str, dataset: &str) -> Result<Vec<(usize, MetricSeries)>> {
    contexts
        .iter()
        .map(|&c| {
            let cut = windows.iter().map(|w| w.with_context(c)).collect::<Result<Vec<_>>>()?;
            Ok((c, evaluate(model, &cut, name, dataset)?))
        })
        .collect()
}

/// Scores the model on fresh windows for each middle length.
pub fn middle_sweep(
    model: &Model,
    data: &VideoSet,
    (p, f): (usize, usize),
    counts: &[usize],
    stride: usize,
    name: &str,
    dataset: &str,
) -> Result<Vec<(usize, MetricSeries)>> {
    counts
        .iter()
        .map(|&m| {
            let windows = data.windows(p, m, f, stride)?;
            Ok((m, evaluate(model, &windows, name, dataset)?))
        })
        .collect()
}
