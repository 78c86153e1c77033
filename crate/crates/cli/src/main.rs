//! `cxrnet`: train, evaluate and run the chest X-ray pneumonia classifier.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cxrnet::datapipe::Split;
use cxrnet::metrics::DEFAULT_THRESHOLD;
use cxrnet::Error;

use crate::config::{Overrides, RunConfig, DATASET_ROOT_ENV};

#[derive(Parser)]
#[command(name = "cxrnet", version, about = "Chest X-ray pneumonia classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset root (overrides `dataset_root` from the config file).
    #[arg(long = "dataset-root", env = DATASET_ROOT_ENV, hide_env_values = true)]
    dataset_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a new model; writes history.csv, model.cxrn, best.cxrn and manifest.json.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a dataset split; writes report.json, roc.csv, pr.csv and scores.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Print the pneumonia probability and label of each image as a JSON line.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Rebuild report.json, roc.csv and pr.csv from a saved scores.csv.
    Report {
        /// Defaults to `<out>/scores.csv`.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
}

/// Process exit status for each error category; 2 is taken by usage errors.
fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "config" => 3,
        "layout" => 4,
        "decode" => 5,
        "format" => 6,
        "numeric" => 7,
        "io" => 8,
        _ => 9,
    }
}

fn resolve(common: &Common, overrides: Overrides) -> cxrnet::Result<RunConfig> {
    let overrides = Overrides {
        out: common.out.clone(),
        ..overrides
    };
    RunConfig::resolve(common.config.as_deref(), common.dataset_root.clone(), &overrides)
}

fn run(cli: Cli) -> cxrnet::Result<()> {
    match cli.command {
        Command::Train { common, seed, epochs } => {
            let cfg = resolve(
                &common,
                Overrides {
                    seed,
                    epochs,
                    ..Overrides::default()
                },
            )?;
            commands::train(&cfg)
        }
        Command::Evaluate {
            common,
            checkpoint,
            split,
        } => {
            let split: Split = split.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            let cfg = resolve(
                &common,
                Overrides {
                    checkpoint,
                    reads_checkpoint: true,
                    ..Overrides::default()
                },
            )?;
            commands::evaluate_split(&cfg, split)
        }
        Command::Predict {
            common,
            checkpoint,
            images,
        } => {
            let cfg = resolve(
                &common,
                Overrides {
                    checkpoint,
                    reads_checkpoint: true,
                    ..Overrides::default()
                },
            )?;
            commands::predict(&cfg, &images)
        }
        Command::Report { scores, out, threshold } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("threshold must be in [0, 1], got {threshold}")));
            }
            let out = out.unwrap_or_else(|| RunConfig::default().output_dir);
            let scores = scores.unwrap_or_else(|| out.join("scores.csv"));
            commands::report(&scores, &out, threshold)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = err.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", err.category());
            ExitCode::from(exit_code(&err))
        }
    }
}
