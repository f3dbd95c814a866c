//! `riskpipe`: annotate posts with an LLM fleet, filter by unanimity, split,
//! ensemble, evaluate, and run the loss comparison on synthetic data.
//!
//! Exit codes: 0 success, 1 user error (bad config, flags or input files),
//! 2 runtime error (network, disk, numerical failure).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::UserError;

#[derive(Debug, Parser)]
#[command(name = "riskpipe", version, about = "Pseudo-labeling pipeline for risk-level text classification")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Pipeline config (TOML). Paths inside it are relative to the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the number of concurrent requests per annotator.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label every unlabeled post with each configured annotator.
    Annotate,
    /// Keep posts on which all required annotators agree.
    Consensus(commands::ConsensusArgs),
    /// Assign stratified folds and apply the token budget.
    Split(commands::SplitArgs),
    /// Combine member predictions by weighted vote.
    Ensemble(commands::EnsembleArgs),
    /// Score predictions against reference labels.
    Evaluate(commands::EvaluateArgs),
    /// Train the linear head with soft-F1 or cross-entropy loss.
    TrainToy(commands::TrainToyArgs),
    /// Word and token length histograms.
    Stats(commands::StatsArgs),
    /// Serve a scripted chat-completion endpoint until interrupted.
    MockServer(commands::MockServerArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Annotate => commands::annotate(g),
        Command::Consensus(a) => commands::consensus(g, &a),
        Command::Split(a) => commands::split(g, &a),
        Command::Ensemble(a) => commands::ensemble(g, &a),
        Command::Evaluate(a) => commands::evaluate(g, &a),
        Command::TrainToy(a) => commands::train_toy(g, &a),
        Command::Stats(a) => commands::stats(g, &a),
        Command::MockServer(a) => commands::mock_server(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UserError>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
