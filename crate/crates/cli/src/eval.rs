use std::path::{Path, PathBuf};

use clap::Args;
use gvqa_core::metrics::{self, PredictionRecord, METRIC_NAMES};
use gvqa_core::reward::GroundTruth;
use gvqa_core::SCHEMA;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{self, required};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Predictions: {"id", "answer", "spans_s"} per line.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Comma-separated metric names; all of them by default.
    #[arg(long)]
    pub metrics: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-item scores as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    pred: PathBuf,
    gt: PathBuf,
    metrics: Vec<String>,
    out: PathBuf,
    csv: Option<PathBuf>,
}

pub fn run(args: &EvalArgs, config_path: Option<&Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "eval")?, "eval")?;
    let names: Vec<String> = match &args.metrics {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    if names.is_empty() {
        return Err(CliError::input("--metrics is empty"));
    }
    if let Some(bad) = names.iter().find(|n| !METRIC_NAMES.contains(&n.as_str())) {
        return Err(CliError::input(format!("unknown metric {bad:?}; known: {}", METRIC_NAMES.join(", "))));
    }
    let cfg = Resolved {
        pred: required(&args.pred, "pred")?,
        gt: required(&args.gt, "gt")?,
        metrics: names,
        out: required(&args.out, "out")?,
        csv: args.csv.clone(),
    };

    let preds: Vec<PredictionRecord> = io::read_jsonl(&cfg.pred)?;
    let gts: Vec<GroundTruth> = io::read_jsonl(&cfg.gt)?;
    let items = metrics::score_items(&preds, &gts)?;
    let report = metrics::report(&items)?;
    let names: Vec<&str> = cfg.metrics.iter().map(String::as_str).collect();
    let selected: serde_json::Map<String, serde_json::Value> =
        report.select(&names)?.into_iter().map(|(k, v)| (k, json!(v))).collect();

    let doc = json!({ "schema": SCHEMA, "config": cfg, "metrics": selected, "report": report });
    let mut body = serde_json::to_string_pretty(&doc).map_err(|e| CliError::runtime(e.to_string()))?;
    body.push('\n');
    io::write_atomic(&cfg.out, &body)?;

    if let Some(csv) = &cfg.csv {
        io::write_atomic(csv, &io::csv_text(&items)?)?;
    }
    Ok(report.table(&names)?.trim_end().to_string())
}
