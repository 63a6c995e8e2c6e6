use std::path::{Path, PathBuf};

use clap::Args;
use gvqa_core::interval::IntervalSet;
use gvqa_core::planner::{self, WindowResult, DEFAULT_TOP_K};
use gvqa_core::SCHEMA;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::common::BudgetSettings;
use crate::config::{self, required};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlanArgs {
    /// Video length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub budget: Option<u32>,
    #[arg(long)]
    pub vmin: Option<u32>,
    #[arg(long)]
    pub vmax: Option<u32>,
    #[arg(long)]
    pub fine_fps: Option<f64>,
    /// Spans to zoom into, e.g. '[[0, 64]]'.
    #[arg(long)]
    pub spans: Option<String>,
    /// Frames per divide-and-conquer window.
    #[arg(long)]
    pub windows: Option<u32>,
    #[arg(long)]
    pub topk: Option<usize>,
    /// Per-window results (WindowResult JSON lines) to aggregate with --topk.
    #[arg(long)]
    pub window_results: Option<PathBuf>,
    /// Also write the printed JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    duration: f64,
    #[serde(flatten)]
    budget: BudgetSettings,
    spans: Option<IntervalSet>,
    windows: Option<u32>,
    topk: usize,
    window_results: Option<PathBuf>,
}

pub fn run(args: &PlanArgs, config_path: Option<&Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "plan")?, "plan")?;
    let spans = match &args.spans {
        Some(raw) => Some(
            serde_json::from_str::<IntervalSet>(raw).map_err(|e| CliError::input(format!("--spans: {e}")))?,
        ),
        None => None,
    };
    let cfg = Resolved {
        duration: required(&args.duration, "duration")?,
        budget: BudgetSettings::resolve(args.budget, args.vmin, args.vmax, args.fps, args.fine_fps),
        spans,
        windows: args.windows,
        topk: args.topk.unwrap_or(DEFAULT_TOP_K),
        window_results: args.window_results.clone(),
    };
    let planner = cfg.budget.planner()?;

    let mut doc = serde_json::Map::new();
    doc.insert("schema".into(), json!(SCHEMA));
    doc.insert("config".into(), to_value(&cfg)?);
    doc.insert("coarse".into(), to_value(&planner.coarse(cfg.duration)?)?);
    if let Some(spans) = &cfg.spans {
        let clipped = spans.clamp(0.0, cfg.duration);
        doc.insert("fine".into(), to_value(&planner.fine(&clipped)?)?);
    }
    if let Some(frames) = cfg.windows {
        let windows = planner::divide_windows(cfg.duration, frames, &planner.budget)?;
        doc.insert("windows".into(), to_value(&windows)?);
    }
    if let Some(path) = &cfg.window_results {
        let results: Vec<WindowResult> = io::read_jsonl(path)?;
        let results = results
            .into_iter()
            .map(|r| WindowResult::new(r.window, r.predicted_spans, r.answer, r.confidence))
            .collect::<Result<Vec<_>, _>>()?;
        let top = planner::aggregate_top_spans(&results, cfg.topk)?;
        doc.insert("fine_from_windows".into(), to_value(&planner.fine(&top)?)?);
        doc.insert("aggregated_spans".into(), to_value(&top)?);
    }
    let mut body = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::runtime(e.to_string()))?;
    if let Some(out) = &args.out {
        body.push('\n');
        io::write_atomic(out, &body)?;
        body.pop();
    }
    Ok(body)
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::runtime(e.to_string()))
}
