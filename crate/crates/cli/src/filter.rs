use std::path::{Path, PathBuf};

use clap::Args;
use gvqa_core::filter::{self, RolloutStats, DEFAULT_DELTA_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::config::{self, required};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FilterArgs {
    /// Rollout statistics: {"id", "ious", "correct"} per line.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Minimum IoU spread to keep an example.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Decision sidecar; defaults to the output path with a .decisions.jsonl extension.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    #[serde(rename = "in")]
    input: PathBuf,
    delta: f64,
    out: PathBuf,
    decisions: PathBuf,
}

pub fn run(args: &FilterArgs, config_path: Option<&Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "filter")?, "filter")?;
    let out = required(&args.out, "out")?;
    let cfg = Resolved {
        input: required(&args.input, "in")?,
        delta: args.delta.unwrap_or(DEFAULT_DELTA_THRESHOLD),
        decisions: args.decisions.clone().unwrap_or_else(|| io::sibling(&out, "decisions.jsonl")),
        out,
    };
    if !(cfg.delta.is_finite() && cfg.delta >= 0.0) {
        return Err(CliError::input(format!("--delta must be a non-negative number, got {}", cfg.delta)));
    }

    let records: Vec<RolloutStats> = io::read_jsonl(&cfg.input)?;
    let decisions = filter::filter_examples(&records, cfg.delta)?;
    let kept = filter::kept_records(&records, &decisions);

    let header = io::header_line("filter", &cfg)?;
    let mut lines = vec![header.clone()];
    for r in &kept {
        lines.push(io::record_line(r)?);
    }
    io::write_atomic(&cfg.out, &io::join_lines(&lines))?;

    let mut side = vec![header];
    for d in &decisions {
        side.push(io::record_line(d)?);
    }
    io::write_atomic(&cfg.decisions, &io::join_lines(&side))?;
    Ok(format!("kept {} of {} examples -> {}", kept.len(), records.len(), cfg.out.display()))
}
