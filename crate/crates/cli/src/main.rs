use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use padkit::data::{Split, SynthProfile};
use padkit::error::{Error, Result};
use padkit::eval::Aggregation;
use padkit::model::Variant;
use padkit_cli::commands::{
    cmd_crosseval, cmd_eval, cmd_extract, cmd_gradcheck, cmd_inspect, cmd_predict, cmd_synth, cmd_train,
    format_crosseval, format_eval, format_gradcheck, gradcheck_verdict, parse_named, CrossEvalArgs, SynthArgs,
    TrainArgs,
};
use padkit_cli::config::{require_path, RunConfig};

#[derive(Parser)]
#[command(name = "padkit", version, about = "Face presentation attack detection toolkit")]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed and PADKIT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Dual,
    DeepOnly,
    WideOnly,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Dual => Variant::Dual,
            VariantArg::DeepOnly => Variant::DeepOnly,
            VariantArg::WideOnly => Variant::WideOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Frame,
    Video,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic genuine/spoof dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "a")]
        profile: ProfileArg,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        dev: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        /// Image side; defaults to the model input side.
        #[arg(long)]
        side: Option<usize>,
    },
    /// Build the texture feature cache of a manifest.
    Extract {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on the train split; reports dev EER when a dev split exists.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        loss_log: Option<PathBuf>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// EER and HTER from dev and test score files.
    Eval {
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        aggregation: AggregationArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test ROC as CSV, for the first aggregation.
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Cross-dataset matrix over checkpoints and datasets.
    Crosseval {
        /// NAME=MANIFEST, repeatable.
        #[arg(long = "dataset", value_parser = parse_named, required = true)]
        datasets: Vec<(String, PathBuf)>,
        /// NAME=CACHE, repeatable.
        #[arg(long = "cache", value_parser = parse_named)]
        caches: Vec<(String, PathBuf)>,
        /// TRAIN_NAME=CHECKPOINT, repeatable.
        #[arg(long = "checkpoint", value_parser = parse_named, required = true)]
        checkpoints: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a manifest (or one split) with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every layer and the tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f32,
        #[arg(long, default_value_t = 12)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer parameter tables.
    Inspect {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Print JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Synth {
            out,
            profile,
            train,
            dev,
            test,
            side,
        } => {
            let args = SynthArgs {
                out,
                profile: match profile {
                    ProfileArg::A => SynthProfile::A,
                    ProfileArg::B => SynthProfile::B,
                },
                train,
                dev,
                test,
                side: side.unwrap_or(config.model.input_side),
            };
            let records = cmd_synth(&args, &config)?;
            println!("wrote {} images and {}", records.len(), args.out.join("manifest.csv").display());
        }
        Command::Extract { manifest, out } => {
            let manifest = require_path(manifest, &config.paths.manifest, "manifest")?;
            let out = require_path(out, &config.paths.cache, "out")?;
            let report = cmd_extract(&manifest, &out, &config)?;
            for f in &report.failures {
                eprintln!("skipped {} [{}]: {}", f.id, f.class, f.detail);
            }
            println!("described {} of {} records into {}", report.written, report.requested, out.display());
        }
        Command::Train {
            manifest,
            cache,
            out,
            loss_log,
            resume,
            variant,
        } => {
            if let Some(v) = variant {
                config.model.variant = v.into();
            }
            let args = TrainArgs {
                manifest: require_path(manifest, &config.paths.manifest, "manifest")?,
                cache: cache.or_else(|| config.paths.cache.clone()),
                out: require_path(out, &config.paths.checkpoint, "out")?,
                loss_log: loss_log.or_else(|| config.paths.loss_log.clone()),
                resume,
            };
            let mut epoch = (0, 0.0f64, 0usize);
            let mut progress = |e: &padkit::train::LossLogEntry| {
                if e.epoch != epoch.0 && epoch.2 > 0 {
                    eprintln!("epoch {:>3}  mean loss {:.5}", epoch.0, epoch.1 / epoch.2 as f64);
                    epoch = (e.epoch, 0.0, 0);
                }
                epoch.0 = e.epoch;
                epoch.1 += f64::from(e.loss);
                epoch.2 += 1;
            };
            let summary = cmd_train(&args, &config, &mut progress)?;
            if epoch.2 > 0 {
                eprintln!("epoch {:>3}  mean loss {:.5}", epoch.0, epoch.1 / epoch.2 as f64);
            }
            if let Some(e) = summary.dev_eer {
                println!("dev EER {:.2}%", 100.0 * e);
            }
            println!(
                "wrote {} ({} epochs) and {}",
                args.out.display(),
                summary.epochs_completed,
                summary.loss_log.display()
            );
        }
        Command::Eval {
            dev,
            test,
            aggregation,
            out,
            roc,
        } => {
            let aggs: &[Aggregation] = match aggregation {
                AggregationArg::Frame => &[Aggregation::Frame],
                AggregationArg::Video => &[Aggregation::Video],
                AggregationArg::Both => &[Aggregation::Frame, Aggregation::Video],
            };
            let out = out.or_else(|| config.paths.report.clone());
            let reports = cmd_eval(&dev, &test, aggs, out.as_deref(), roc.as_deref(), &config)?;
            print!("{}", format_eval(&reports));
        }
        Command::Crosseval {
            datasets,
            caches,
            checkpoints,
            out,
        } => {
            let args = CrossEvalArgs {
                datasets,
                caches,
                checkpoints,
                out: out.or_else(|| config.paths.report.clone()),
            };
            print!("{}", format_crosseval(&cmd_crosseval(&args, &config)?));
        }
        Command::Predict {
            checkpoint,
            manifest,
            cache,
            split,
            out,
        } => {
            let checkpoint = require_path(checkpoint, &config.paths.checkpoint, "checkpoint")?;
            let manifest = require_path(manifest, &config.paths.manifest, "manifest")?;
            let out = require_path(out, &config.paths.scores, "out")?;
            let cache = cache.or_else(|| config.paths.cache.clone());
            let scores = cmd_predict(&checkpoint, &manifest, cache.as_deref(), split.map(Into::into), &out, &config)?;
            println!("wrote {} scores to {}", scores.len(), out.display());
        }
        Command::Gradcheck {
            epsilon,
            samples,
            tolerance,
            out,
        } => {
            let entries = cmd_gradcheck(epsilon, samples, &config)?;
            print!("{}", format_gradcheck(&entries));
            if let Some(path) = out {
                let body = serde_json::json!({ "command": "gradcheck", "config": config.to_json(), "entries": entries });
                padkit::fsutil::write_atomic(&path, serde_json::to_string_pretty(&body)?.as_bytes())?;
            }
            gradcheck_verdict(&entries, tolerance)?;
        }
        Command::Inspect {
            checkpoint,
            variant,
            json,
        } => {
            if let Some(v) = variant {
                config.model.variant = v.into();
            }
            let arch = cmd_inspect(&config, checkpoint.as_deref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&arch).map_err(Error::from)?);
            } else {
                println!("{arch}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
