//! Batch front end: train a model on feature/annotation directories, run it
//! over feature sequences, or score it against annotations.
//!
//! Sequences pair by file stem: `video123.csv` in the features directory
//! matches `video123.txt` in the annotations directory. Training pools all
//! sequences into one set and fits a single two-target model.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use affect_forest::tree::MaxFeatures;

#[derive(Parser)]
#[command(
    name = "affect-forest",
    version,
    about = "Train, run, and score valence/arousal forest models over per-frame facial features"
)]
struct Cli {
    /// Worker threads for tree fitting (0 = one per core). Results are
    /// byte-identical at any thread count.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a multi-output forest on matching feature/annotation sequences
    Train(TrainArgs),
    /// Predict valence/arousal for every sequence in a feature directory
    Predict(PredictArgs),
    /// Score a saved model against annotated sequences
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of per-sequence feature CSVs
    #[arg(long, value_name = "DIR")]
    features: PathBuf,

    /// Directory of annotation files with the same stems, `.txt` extension
    #[arg(long, value_name = "DIR")]
    annotations: PathBuf,

    /// Where to write the fitted model
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Trees per forest
    #[arg(long, default_value_t = 250, value_name = "N")]
    trees: usize,

    /// Master seed; every random choice in training derives from it
    #[arg(long, default_value_t = 0, value_name = "S")]
    seed: u64,

    /// Maximum tree depth (unlimited when omitted)
    #[arg(long, value_name = "D")]
    max_depth: Option<u32>,

    /// Minimum samples in any leaf produced by a split
    #[arg(long = "min-leaf", default_value_t = 1, value_name = "L")]
    min_leaf: usize,

    /// Split candidates per node: all, sqrt, third, or a fixed count
    #[arg(long = "max-features", default_value = "third", value_parser = parse_max_features)]
    max_features: MaxFeatures,

    /// Fit every tree on the full data instead of bootstrap resamples
    #[arg(long = "no-bootstrap")]
    no_bootstrap: bool,

    /// Drop frames with detector confidence below this value
    #[arg(long = "min-confidence", value_name = "C")]
    min_confidence: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory of per-sequence feature CSVs
    #[arg(long, value_name = "DIR")]
    features: PathBuf,

    /// Model file to run
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Output directory; one `<stem>.csv` per sequence, plus
    /// `<stem>.dropped.txt` sidecars when frames were skipped
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Drop frames with detector confidence below this value
    #[arg(long = "min-confidence", value_name = "C")]
    min_confidence: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of per-sequence feature CSVs
    #[arg(long, value_name = "DIR")]
    features: PathBuf,

    /// Directory of annotation files with the same stems, `.txt` extension
    #[arg(long, value_name = "DIR")]
    annotations: PathBuf,

    /// Model file to score
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Also write the report as key=value text to this path
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Drop frames with detector confidence below this value
    #[arg(long = "min-confidence", value_name = "C")]
    min_confidence: Option<f64>,
}

fn parse_max_features(s: &str) -> Result<MaxFeatures, String> {
    match s {
        "all" => Ok(MaxFeatures::All),
        "sqrt" => Ok(MaxFeatures::Sqrt),
        "third" => Ok(MaxFeatures::Third),
        other => other
            .parse::<usize>()
            .map(MaxFeatures::Fixed)
            .map_err(|_| format!("expected all, sqrt, third, or a count; got {other:?}")),
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Evaluate(args) => commands::evaluate(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
