//! `gvqa`: file-level access to rewards, advantages, budgets, metrics,
//! filtering and toy training.

mod common;
mod config;
mod episodes;
mod error;
mod eval;
mod filter;
mod io;
mod plan;
mod score;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gvqa", version, about = "Grounded video QA rewards, budgets and evaluation")]
struct Cli {
    /// TOML config with one table per command; falls back to $ZZ_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rewards and per-token advantages for rollout groups.
    Score(score::ScoreArgs),
    /// Grounding and answer metrics for a prediction file.
    Eval(eval::EvalArgs),
    /// Coarse, fine and windowed frame plans.
    Plan(plan::PlanArgs),
    /// Keep examples whose rollouts disagree on grounding.
    Filter(filter::FilterArgs),
    /// Train the toy policy and write a reward trace.
    TrainToy(train::TrainArgs),
    /// Synthetic episodes and scripted rollout groups.
    GenEpisodes(episodes::EpisodesArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = cli.config.as_deref();
    let result = match &cli.command {
        Command::Score(a) => score::run(a, cfg),
        Command::Eval(a) => eval::run(a, cfg),
        Command::Plan(a) => plan::run(a, cfg),
        Command::Filter(a) => filter::run(a, cfg),
        Command::TrainToy(a) => train::run(a, cfg),
        Command::GenEpisodes(a) => episodes::run(a, cfg),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
