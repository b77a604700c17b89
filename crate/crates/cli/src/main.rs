use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use midgap::harness::report::{read_metrics_csv, summary_table, write_frame_strip, write_report};
use midgap::harness::{self, checkpoint, Config, MetricSeries, Model, Trainer, Variant};

/// Bidirectional video frame inpainting: train, evaluate and report.
#[derive(Debug, Parser)]
#[command(name = "midgap", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file of `key = value` lines (defaults to the synthetic preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the model variant (tai, twi, bi_tw, bi_sa, forward_only, handcrafted:NAME).
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` config overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes the configured train and test videos as frame folders with manifests.
    GenData,
    /// Trains the configured variant, optionally resuming from a checkpoint.
    Train {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Scores a model per middle timestep on the test windows.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Middle frames predicted at test time.
        #[arg(long)]
        middle_frames: Option<usize>,
        /// Context frames kept on each side.
        #[arg(long)]
        context: Option<usize>,
    },
    /// Re-scores the same windows with fewer context frames.
    SweepContext {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Context counts to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
        context: Vec<usize>,
    },
    /// Scores the model for several middle-frame counts.
    SweepMiddle {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Middle-frame counts to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5])]
        middle_frames: Vec<usize>,
    },
    /// Merges metric tables into one CSV plus SVG plots.
    Report {
        /// `metrics.csv` files written by eval or the sweeps.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Runs the finite-difference gradient suite.
    GradCheck,
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = Config::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text)?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(v) = &common.variant {
        config.variant = Variant::parse(v)?;
    }
    for kv in &common.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn write_config(config: &Config, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.cfg"), config.to_text())?;
    Ok(())
}

fn model(config: &Config, checkpoint: Option<&Path>) -> Result<Model> {
    Ok(harness::model_for(config, checkpoint)?)
}

fn finish_report(series: &[MetricSeries], config: &Config, out: &Path, title: &str) -> Result<()> {
    write_report(series, out, title, &config.to_text())?;
    print!("{}", summary_table(series));
    info!("report written to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    match cli.command {
        Command::GenData => {
            let train = harness::train_set(&config)?;
            let test = harness::test_set(&config)?;
            train.save(&out.join("train"))?;
            test.save(&out.join("test"))?;
            write_config(&config, out)?;
            println!("{} train and {} test videos written to {}", train.len(), test.len(), out.display());
        }
        Command::Train { checkpoint, iters } => {
            if let Some(n) = iters {
                config.iterations = n;
            }
            let data = harness::train_set(&config)?;
            let mut trainer = match checkpoint {
                Some(path) => {
                    let mut t = checkpoint::read(&path)?.into_trainer()?;
                    t.config.iterations = config.iterations;
                    t
                }
                None => Trainer::new(config.clone())?,
            };
            write_config(&trainer.config, out)?;
            trainer.run(&data, Some(out))?;
            let last = trainer.trace.last().copied().unwrap_or_default();
            println!(
                "trained {} for {} iterations: image loss {:.4}, checkpoint {}",
                trainer.config.variant.name(),
                trainer.iteration,
                last.img_final,
                out.join("checkpoint.bin").display()
            );
        }
        Command::Eval { checkpoint, middle_frames, context } => {
            if let Some(m) = middle_frames {
                config.test_middle = m;
            }
            let m = model(&config, checkpoint.as_deref())?;
            let test = harness::test_set(&config)?;
            let mut windows = test.windows(config.p, config.test_middle, config.f, config.test_stride)?;
            if let Some(c) = context {
                windows = windows.iter().map(|w| w.with_context(c)).collect::<midgap::Result<_>>()?;
            }
            let name = config.variant.name();
            let series = harness::evaluate(&m, &windows, name, &dataset_name(&config))?;
            if let Some(first) = windows.first() {
                let mut rows = vec![first.reassemble().frames()];
                let mut pred = first.preceding.frames();
                pred.extend(m.infer(first)?);
                pred.extend(first.following.frames());
                rows.push(pred);
                let ext = if first.middle.frame_shape().0 == 3 { "ppm" } else { "pgm" };
                std::fs::create_dir_all(out)?;
                write_frame_strip(&rows, &out.join(format!("strip.{ext}")))?;
            }
            finish_report(&[series], &config, out, &format!("{name}: per-frame quality"))?;
        }
        Command::SweepContext { checkpoint, context } => {
            let m = model(&config, checkpoint.as_deref())?;
            let widest = context.iter().copied().max().unwrap_or(1);
            let test = harness::test_set(&config)?;
            let windows = test.windows(widest, config.test_middle, widest, config.test_stride)?;
            let name = config.variant.name();
            let rows = harness::context_sweep(&m, &windows, &context, name, &dataset_name(&config))?;
            let series: Vec<MetricSeries> = rows
                .into_iter()
                .map(|(c, mut s)| {
                    s.model = format!("{name}@context{c}");
                    s
                })
                .collect();
            finish_report(&series, &config, out, &format!("{name}: context sweep"))?;
        }
        Command::SweepMiddle { checkpoint, middle_frames } => {
            let m = model(&config, checkpoint.as_deref())?;
            let test = harness::test_set(&config)?;
            let name = config.variant.name();
            let rows = harness::middle_sweep(&m, &test, (config.p, config.f), &middle_frames, config.test_stride, name, &dataset_name(&config))?;
            let series: Vec<MetricSeries> = rows
                .into_iter()
                .map(|(k, mut s)| {
                    s.model = format!("{name}@m{k}");
                    s
                })
                .collect();
            finish_report(&series, &config, out, &format!("{name}: middle-frame sweep"))?;
        }
        Command::Report { inputs } => {
            let mut series = Vec::new();
            for path in &inputs {
                series.extend(read_metrics_csv(path, &dataset_name(&config))?);
            }
            finish_report(&series, &config, out, "per-frame quality")?;
        }
        Command::GradCheck => {
            let mut failed = 0;
            for r in midgap::gradcheck::run_suite()? {
                let status = if r.passed() { "ok" } else { "FAIL" };
                failed += usize::from(!r.passed());
                println!("{:<20} rel err {:.2e}  {:>6.2}s  {status}", r.name, r.rel_error, r.seconds);
            }
            if failed > 0 {
                bail!("{failed} gradient checks exceeded tolerance {:e}", midgap::gradcheck::TOLERANCE);
            }
        }
    }
    Ok(())
}

fn dataset_name(config: &Config) -> String {
    match &config.test_data {
        harness::DataSource::Synthetic => format!("synthetic(seed {})", config.data_seed),
        harness::DataSource::Manifest(p) => p.clone(),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
