//! Experiment plumbing: configuration, training, checkpoints, evaluation and
//! reports.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod model;
pub mod report;
pub mod train;

use std::path::Path;
use std::sync::OnceLock;

use rayon::ThreadPool;

use crate::data::VideoSet;
use crate::error::{Error, Result};
use crate::rng::derive;

pub use checkpoint::{load_model, Checkpoint};
pub use config::{Config, DataSource, Variant};
pub use evaluate::{context_sweep, evaluate, middle_sweep, MetricPoint, MetricSeries};
pub use model::{Model, Outputs};
pub use train::{train, Trainer};

/// Environment variable bounding the worker threads used per batch and
/// during evaluation.
pub const THREADS_VAR: &str = "MIDGAP_THREADS";

/// Worker count from `MIDGAP_THREADS`, defaulting to the available cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// The shared worker pool, sized once on first use. Results are always
/// gathered in input order, so the thread count never changes outputs.
pub fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("worker pool")
    })
}

fn load_set(config: &Config, source: &DataSource, count: usize, stream: u64) -> Result<VideoSet> {
    let set = match source {
        DataSource::Synthetic => VideoSet::synthetic(&config.scene, count, config.video_length, derive(config.data_seed, stream))?,
        DataSource::Manifest(path) => VideoSet::from_manifest(Path::new(path))?,
    };
    train::check_data(config, &set)?;
    Ok(set)
}

pub fn train_set(config: &Config) -> Result<VideoSet> {
    load_set(config, &config.train_data, config.train_videos, 0)
}

pub fn test_set(config: &Config) -> Result<VideoSet> {
    load_set(config, &config.test_data, config.test_videos, 1)
}

/// The model a config describes: weight-free baselines are built directly,
/// learned variants load their weights from `checkpoint`.
pub fn model_for(config: &Config, checkpoint: Option<&Path>) -> Result<Model> {
    match (config.variant.is_trainable(), checkpoint) {
        (false, _) => Model::new(config.variant, &config.arch, 0),
        (true, Some(path)) => load_model(config, path),
        (true, None) => Err(Error::Config(format!("{} needs a checkpoint to evaluate", config.variant.name()))),
    }
}
