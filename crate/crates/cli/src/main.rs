//! `vt`: preprocessing, agreement, source training, the four-model
//! comparison, prediction and self-checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "vt", version, about = "Valence classification with transfer from binary sentiment")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Corpus format: `jsonl` or `csv` (Sentiment140 layout).
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true)]
    glove: Option<PathBuf>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize a corpus and write it as JSONL.
    Preprocess,
    /// Word-count histogram CSV plus corpus summary on stdout.
    Stats,
    /// Majority-vote resolution of annotator labels; agreement report on stdout.
    Resolve,
    /// Train the binary source model and save its weights.
    TrainSource,
    /// Stratified cross-validated comparison of the four models.
    Evaluate,
    /// Class probabilities and per-token attention for each document.
    Predict,
    /// Gradient and metric self-checks; exits nonzero on any failure.
    Selfcheck,
    /// Write a synthetic source corpus, target corpus and word vectors.
    Synth,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        input: cli.input,
        format: cli.format,
        output: cli.output,
        weights: cli.weights,
        glove: cli.glove,
        folds: cli.folds,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
    log::debug!("effective config {}: {cfg:?}", cfg.hash());
    match cli.command {
        Command::Preprocess => commands::preprocess_cmd(&cfg),
        Command::Stats => commands::stats_cmd(&cfg),
        Command::Resolve => commands::resolve_cmd(&cfg),
        Command::TrainSource => commands::train_source_cmd(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Predict => commands::predict_cmd(&cfg),
        Command::Selfcheck => commands::selfcheck_cmd(&cfg),
        Command::Synth => commands::synth_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VT_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
