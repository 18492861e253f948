use std::path::PathBuf;
use std::process::ExitCode;

use bodyfuse::error::exit;
use bodyfuse::pipeline::{self, PipelineConfig, RawLabels, Split};
use bodyfuse::Error;
use clap::{Parser, Subcommand, ValueEnum};

/// Synthetic part-expert distillation pipeline.
#[derive(Parser, Debug)]
#[command(name = "bodyfuse", version)]
struct Cli {
    /// TOML configuration; the bundled demo configuration when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory; falls back to `paths.out_dir`, then `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LabelsArg {
    /// Keypoint terms only.
    None,
    /// Fused expert labels without selection.
    Unselected,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scenes, keypoints and expert predictions as JSON lines.
    Synth {
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Number of scenes; defaults to the configured size of the split.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Select pseudo labels from a scene file.
    Curate {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Train a network on curated samples or raw scenes.
    Train {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Scene file scored after every epoch.
        #[arg(long, value_name = "PATH")]
        eval: Option<PathBuf>,
        /// Labels taken from a raw scene file.
        #[arg(long, value_enum, default_value = "unselected")]
        raw_labels: LabelsArg,
        /// Overrides `ema.enabled`.
        #[arg(long, value_enum)]
        ema: Option<Toggle>,
    },
    /// Score a checkpoint on a scene file.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
    /// Merge the per-epoch logs of several training runs into one CSV.
    Report {
        #[arg(required = true, value_name = "RUN_DIR")]
        runs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<i32, Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::demo(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
        cfg.validate()?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Synth { split, count } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Eval => Split::Eval,
            };
            let count = count.unwrap_or(match split {
                Split::Train => cfg.synth.train_scenes,
                Split::Eval => cfg.synth.eval_scenes,
            });
            let path = pipeline::synth_to_dir(&cfg, split, count, &out)?;
            println!("wrote {count} scenes to {}", path.display());
        }
        Command::Curate { input } => {
            let report = pipeline::curate_to_dir(&cfg, &input, &out)?;
            println!(
                "{} samples kept of {} (step 1: -{}, step 2: -{}, step 3: -{}, gate undefined: -{})",
                report.kept,
                report.input,
                report.discarded_step1,
                report.discarded_step2,
                report.discarded_step3,
                report.gate_undefined
            );
            if report.kept == 0 {
                eprintln!("error: 0 samples kept");
                return Ok(exit::VALIDATION);
            }
        }
        Command::Train {
            input,
            eval,
            raw_labels,
            ema,
        } => {
            if let Some(t) = ema {
                cfg.ema.enabled = matches!(t, Toggle::On);
            }
            let labels = match raw_labels {
                LabelsArg::None => RawLabels::None,
                LabelsArg::Unselected => RawLabels::Unselected,
            };
            let run = pipeline::train_to_dir(&cfg, &input, labels, eval.as_deref(), &out)?;
            let last = run.epochs.last().map(|e| e.loss.total).unwrap_or(f64::NAN);
            println!("trained {} epochs on {} samples, final loss {last:.6}", run.epochs.len(), run.samples);
            if let Some(m) = run.final_metrics() {
                println!("final PA-MPJPE {:.3} mm", m.pa_mpjpe);
            }
        }
        Command::Eval { checkpoint, input } => {
            let report = pipeline::eval_to_dir(&cfg, &checkpoint, &input, &out)?;
            print!("{}", report.to_table());
        }
        Command::Report { runs } => {
            let csv = pipeline::report_csv(&runs)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let path = out.join("report.csv");
            std::fs::write(&path, csv).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            println!("wrote {}", path.display());
        }
    }
    Ok(exit::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FURPE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
