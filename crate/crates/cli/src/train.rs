use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gvqa_core::grpo::KlEstimator;
use gvqa_core::train::{self, OptimizerConfig, ToyTask, ToyTaskConfig, UpdateRule};
use serde::{Deserialize, Serialize};

use crate::common::ModeArg;
use crate::config::{self, required};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Seeds both the toy task and the sampler.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// KL penalty weight.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub update: Option<UpdateArg>,
    #[arg(long, value_enum)]
    pub kl: Option<KlArg>,
    /// Ratio clip range; unclipped when omitted.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Fixed-seed groups averaged into each trace record.
    #[arg(long)]
    pub eval_groups: Option<usize>,
    /// Number of toy videos.
    #[arg(long)]
    pub prompts: Option<usize>,
    /// Questions per toy video (1 to 4).
    #[arg(long)]
    pub variants: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready CSV; defaults to the trace path with a .csv extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlArg {
    K3,
    Exact,
}

#[derive(Debug, Serialize)]
struct Resolved {
    optimizer: OptimizerConfig,
    task: ToyTaskConfig,
    out: PathBuf,
    csv: PathBuf,
}

pub fn run(args: &TrainArgs, config_path: Option<&Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "train-toy")?, "train-toy")?;
    let d = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        beta: args.beta.unwrap_or(d.beta),
        group_size: args.group_size.unwrap_or(d.group_size),
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        steps: args.steps.unwrap_or(d.steps),
        seed: args.seed.unwrap_or(d.seed),
        mode: args.mode.map_or(d.mode, Into::into),
        kl_estimator: match args.kl {
            Some(KlArg::K3) => KlEstimator::K3,
            Some(KlArg::Exact) => KlEstimator::Exact,
            None => d.kl_estimator,
        },
        clip: args.clip.or(d.clip),
        update: match args.update {
            Some(UpdateArg::Adam) => UpdateRule::Adam,
            Some(UpdateArg::Sgd) => UpdateRule::Sgd,
            None => d.update,
        },
        eval_groups: args.eval_groups.unwrap_or(d.eval_groups),
    };
    let td = ToyTaskConfig::default();
    let task = ToyTaskConfig {
        n_prompts: args.prompts.unwrap_or(td.n_prompts),
        answer_variants: args.variants.unwrap_or(td.answer_variants),
        ..td
    };
    let out = required(&args.out, "out")?;
    let cfg = Resolved { optimizer, task, csv: args.csv.clone().unwrap_or_else(|| io::sibling(&out, "csv")), out };
    if let Some(c) = cfg.optimizer.clip {
        if !(c.is_finite() && c > 0.0) {
            return Err(CliError::input(format!("--clip must be positive, got {c}")));
        }
    }
    cfg.optimizer.validate()?;
    let toy = ToyTask::new(cfg.optimizer.seed, cfg.task)?;

    let trace = train::train_loop(&toy, &cfg.optimizer).map_err(|e| CliError::runtime(format!("training failed: {e}")))?;

    let mut lines = vec![io::header_line("train-toy", &cfg)?];
    for r in &trace.records {
        lines.push(io::record_line(r)?);
    }
    io::write_atomic(&cfg.out, &io::join_lines(&lines))?;
    io::write_atomic(&cfg.csv, &io::csv_text(&trace.records)?)?;
    let last = trace.records.last().expect("trace has the initial record");
    Ok(format!(
        "{} records; final mean IoU {:.4}, accuracy {:.4} -> {}",
        trace.records.len(),
        last.mean_iou,
        last.mean_acc,
        cfg.out.display()
    ))
}
