use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gvqa_core::sim::{self, ClientMode, EpisodeConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{self, required};
use crate::error::CliResult;
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EpisodesArgs {
    #[arg(long)]
    pub count: Option<usize>,
    /// Episode `k` uses seed `seed + k`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_duration: Option<f64>,
    #[arg(long)]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write scripted rollout groups here, ready for `score`.
    #[arg(long)]
    pub rollouts: Option<PathBuf>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long, value_enum)]
    pub rollout_mode: Option<RolloutMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Exact copies of the perfect rollout.
    Oracle,
    /// Kinds drawn at random from the well-formed fixtures.
    Noisy,
    /// Exact, shifted, empty and malformed first, then random well-formed kinds.
    Adversarial,
}

#[derive(Debug, Serialize)]
struct Resolved {
    count: usize,
    seed: u64,
    min_duration: f64,
    max_duration: f64,
    events: usize,
    out: PathBuf,
    rollouts: Option<PathBuf>,
    group_size: usize,
    rollout_mode: RolloutMode,
}

pub fn run(args: &EpisodesArgs, config_path: Option<&Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "gen-episodes")?, "gen-episodes")?;
    let d = EpisodeConfig::default();
    let cfg = Resolved {
        count: args.count.unwrap_or(10),
        seed: args.seed.unwrap_or(0),
        min_duration: args.min_duration.unwrap_or(d.duration_range.0),
        max_duration: args.max_duration.unwrap_or(d.duration_range.1),
        events: args.events.unwrap_or(d.n_events),
        out: required(&args.out, "out")?,
        rollouts: args.rollouts.clone(),
        group_size: args.group_size.unwrap_or(8),
        rollout_mode: args.rollout_mode.unwrap_or(RolloutMode::Noisy),
    };
    let mode = match cfg.rollout_mode {
        RolloutMode::Oracle => ClientMode::Oracle,
        RolloutMode::Noisy => ClientMode::Noisy(0.0),
        RolloutMode::Adversarial => ClientMode::Adversarial,
    };
    let ep_cfg = EpisodeConfig { duration_range: (cfg.min_duration, cfg.max_duration), n_events: cfg.events, ..d };

    let mut episodes = vec![io::header_line("gen-episodes", &cfg)?];
    let mut groups = vec![io::header_line("gen-episodes", &cfg)?];
    for k in 0..cfg.count {
        let seed = cfg.seed.wrapping_add(k as u64);
        let ep = sim::generate_episode_with(seed, &ep_cfg)?;
        episodes.push(io::record_line(&ep)?);
        if cfg.rollouts.is_some() {
            let group = sim::scripted_rollout_group(&ep, cfg.group_size, mode, seed)?;
            let rollouts: Vec<_> = group.rollouts.iter().map(|r| json!({ "text": r.text, "tokens": r.tokens })).collect();
            groups.push(io::record_line(&json!({ "id": ep.id, "group": rollouts }))?);
        }
    }
    io::write_atomic(&cfg.out, &io::join_lines(&episodes))?;
    if let Some(path) = &cfg.rollouts {
        io::write_atomic(path, &io::join_lines(&groups))?;
    }
    Ok(format!("wrote {} episodes -> {}", cfg.count, cfg.out.display()))
}
