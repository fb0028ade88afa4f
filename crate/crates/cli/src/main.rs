//! `rffp`: generate captures, build datasets, train, assemble and evaluate
//! distance-gated device fingerprinting models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "rffp", version, about = "RF device fingerprinting toolkit")]
pub struct Cli {
    /// Master seed for simulation, splits, initialization and shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Training config file (TOML). Defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root.
    #[arg(long, global = true, env = "RFFP_OUT_DIR", default_value = "rffp-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a capture campaign into <out>/data.
    Generate(GenerateArgs),
    /// Window, split and cache a task's dataset into <out>/datasets.
    Dataset(DatasetArgs),
    /// Train a classifier.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Assemble or fine-tune the distance-gated ensemble.
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
    /// Evaluate a model or ensemble on its test split.
    Eval(EvalArgs),
    /// Emit report tables and plots.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Campaign preset: tiny, easy, hard or paper.
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    /// Override the samples per capture.
    #[arg(long)]
    pub samples_per_capture: Option<usize>,
}

/// Options shared by commands that read a dataset.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset manifest or its directory [default: <out>/data].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Window length; overrides the config.
    #[arg(long)]
    pub window: Option<usize>,
    /// Cap on windows taken from each recording; overrides the config.
    #[arg(long)]
    pub max_windows_per_recording: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Task: device@<ft>, device or distance.
    #[arg(long)]
    pub task: String,
    #[command(flatten)]
    pub data: DataArgs,
}

/// Options shared by training commands.
#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Architecture name; overrides the config.
    #[arg(long)]
    pub arch: Option<String>,
    /// Directory for the trained model [default: <out>/models].
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Maximum epochs; overrides the config.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Device classifier for one distance.
    Device {
        /// Distance in feet.
        #[arg(long)]
        distance: u32,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Distance classifier over all distances.
    Distance {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Two-stage curriculum training.
    Curriculum {
        /// Task: device@<ft>, device or distance.
        #[arg(long)]
        task: String,
        /// Also run a direct fit with the same epoch budget and write a comparison.
        #[arg(long)]
        compare: bool,
        /// Validation accuracy counted as converged in the comparison.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum EnsembleCommand {
    /// Combine a distance model and one device model per distance.
    Assemble {
        /// Directory holding distance.model.json and device_<ft>ft.model.json
        /// [default: <out>/models].
        #[arg(long)]
        models: Option<PathBuf>,
        /// Where to write the ensemble [default: <out>/ensemble].
        #[arg(long)]
        into: Option<PathBuf>,
    },
    /// Retrain the device models through the frozen distance router.
    Finetune {
        /// Ensemble directory [default: <out>/ensemble].
        #[arg(long)]
        ensemble: Option<PathBuf>,
        /// Where to write the fine-tuned ensemble [default: <out>/ensemble_finetuned].
        #[arg(long)]
        into: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Maximum epochs; overrides the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model card (<stem>.model.json) to evaluate.
    #[arg(
        long,
        conflicts_with = "ensemble",
        required_unless_present = "ensemble"
    )]
    pub model: Option<PathBuf>,
    /// Ensemble directory to evaluate.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Subcommand, Debug)]
pub enum ReportCommand {
    /// Device precision by distance for an ensemble.
    Heatmap {
        /// Ensemble directory [default: <out>/ensemble].
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Per-distance accuracy of several architectures.
    Compare {
        /// NAME=DIR, where DIR holds device_<ft>ft.model.json for every distance. Repeatable.
        #[arg(long = "arm", required = true, value_parser = parse_arm)]
        arms: Vec<(String, PathBuf)>,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn parse_arm(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => Err(format!("expected NAME=DIR, got {s:?}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
