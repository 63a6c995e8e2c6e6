use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};
use gvqa_core::advantage::{self, AdvantageMode};
use gvqa_core::client::{NullClient, PolicyClient, TcpJsonClient};
use gvqa_core::reward::{ClientFailurePolicy, GroundTruth, RewardEngine, RewardVector};
use gvqa_core::response;
use gvqa_core::sim::{ScriptedClient, SyntheticEpisode};
use serde::{Deserialize, Serialize};

use crate::common::{BudgetSettings, ModeArg};
use crate::config::{self, required};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScoreArgs {
    /// Rollout groups, one JSON object per line: {"id", "group": [{"text", "tokens"?}]}.
    #[arg(long)]
    pub rollouts: Option<PathBuf>,
    /// Ground truth (or synthetic episodes with --zoom-client sim), one per line.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Required size of every group; any size ≥ 2 when omitted.
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `none`, `sim`, or `tcp://host:port`.
    #[arg(long)]
    pub zoom_client: Option<String>,
    #[arg(long, value_enum)]
    pub on_client_error: Option<OnClientError>,
    /// Retries before a failed zoom query scores 0.
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub client_timeout_ms: Option<u64>,
    #[arg(long)]
    pub budget: Option<u32>,
    #[arg(long)]
    pub vmin: Option<u32>,
    #[arg(long)]
    pub vmax: Option<u32>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub fine_fps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnClientError {
    /// Score the zoom reward as 0 after the retries.
    Zero,
    /// Stop with exit code 3.
    Abort,
}

#[derive(Debug, Serialize)]
struct Resolved {
    rollouts: PathBuf,
    gt: PathBuf,
    mode: AdvantageMode,
    group_size: Option<usize>,
    out: PathBuf,
    zoom_client: String,
    on_client_error: OnClientError,
    retries: u32,
    client_timeout_ms: u64,
    eps: f64,
    #[serde(flatten)]
    budget: BudgetSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutLine {
    id: String,
    group: Vec<RolloutIn>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolloutIn {
    text: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct ScoredLine<'a> {
    id: &'a str,
    index: usize,
    rewards: RewardVector,
    /// Group-normalized advantage of each reward kind.
    reward_advantages: RewardVector,
    summed_advantage: f64,
    tokens: &'a [String],
    glue: Vec<bool>,
    advantages: Vec<f64>,
}

pub fn run(args: &ScoreArgs, config_path: Option<&std::path::Path>) -> CliResult<String> {
    let args = config::layered(args, config::load_section(config_path, "score")?, "score")?;
    let cfg = Resolved {
        rollouts: required(&args.rollouts, "rollouts")?,
        gt: required(&args.gt, "gt")?,
        mode: args.mode.unwrap_or(ModeArg::Tokenadv).into(),
        group_size: args.group_size,
        out: required(&args.out, "out")?,
        zoom_client: args.zoom_client.clone().unwrap_or_else(|| "none".into()),
        on_client_error: args.on_client_error.unwrap_or(OnClientError::Zero),
        retries: args.retries.unwrap_or(1),
        client_timeout_ms: args.client_timeout_ms.unwrap_or(30_000),
        eps: advantage::DEFAULT_EPS,
        budget: BudgetSettings::resolve(args.budget, args.vmin, args.vmax, args.fps, args.fine_fps),
    };
    if let Some(g) = cfg.group_size {
        if g < 2 {
            return Err(CliError::input("--group-size must be at least 2"));
        }
    }
    let planner = cfg.budget.planner()?;

    let groups: Vec<RolloutLine> = io::read_jsonl(&cfg.rollouts)?;
    if groups.is_empty() {
        return Err(CliError::input(format!("{}: no rollout groups", cfg.rollouts.display())));
    }
    let (gts, client): (Vec<GroundTruth>, Box<dyn PolicyClient>) = match cfg.zoom_client.as_str() {
        "sim" => {
            let episodes: Vec<SyntheticEpisode> = io::read_jsonl(&cfg.gt)?;
            for ep in &episodes {
                ep.validate()?;
            }
            (episodes.iter().map(SyntheticEpisode::ground_truth).collect(), Box::new(ScriptedClient::oracle(episodes)))
        }
        "none" => (io::read_jsonl(&cfg.gt)?, Box::new(NullClient)),
        uri if uri.starts_with("tcp://") => {
            let client = TcpJsonClient::new(uri, Duration::from_millis(cfg.client_timeout_ms))
                .map_err(|e| CliError::runtime(e.to_string()))?;
            (io::read_jsonl(&cfg.gt)?, Box::new(client))
        }
        other => return Err(CliError::input(format!("unknown --zoom-client {other:?}; use none, sim or tcp://host:port"))),
    };
    let mut by_id = HashMap::new();
    for gt in &gts {
        gt.validate()?;
        if by_id.insert(gt.id.as_str(), gt).is_some() {
            return Err(CliError::input(format!("duplicate ground-truth id {}", gt.id)));
        }
    }

    let mut engine = RewardEngine::new(client.as_ref(), planner);
    engine.on_client_error = match cfg.on_client_error {
        // The null client never answers, so retrying it is pointless.
        _ if cfg.zoom_client == "none" => ClientFailurePolicy::RetryThenZero(0),
        OnClientError::Zero => ClientFailurePolicy::RetryThenZero(cfg.retries),
        OnClientError::Abort => ClientFailurePolicy::Propagate,
    };

    let mut lines = vec![io::header_line("score", &cfg)?];
    let mut n_rollouts = 0;
    for (k, line) in groups.iter().enumerate() {
        let at = || format!("{} group {} ({})", cfg.rollouts.display(), k + 1, line.id);
        let gt = by_id.get(line.id.as_str()).ok_or_else(|| CliError::input(format!("{}: no ground truth", at())))?;
        if line.group.len() < 2 {
            return Err(CliError::input(format!("{}: a group needs at least 2 rollouts", at())));
        }
        if let Some(g) = cfg.group_size {
            if line.group.len() != g {
                return Err(CliError::input(format!("{}: {} rollouts, expected {g}", at(), line.group.len())));
            }
        }
        let tokens: Vec<Vec<String>> = line
            .group
            .iter()
            .map(|r| r.tokens.clone().unwrap_or_else(|| response::symbol_tokens(&r.text)))
            .collect();
        let masks = line
            .group
            .iter()
            .zip(&tokens)
            .map(|(r, t)| response::glue_token_mask(t, &r.text))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(format!("{}: {e}", at())))?;
        let rewards = line
            .group
            .iter()
            .map(|r| engine.score_text(&r.text, gt))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| match CliError::from(e) {
                CliError::Input(m) => CliError::input(format!("{}: {m}", at())),
                CliError::Runtime(m) => CliError::runtime(format!("{}: {m}", at())),
            })?;
        let ga = advantage::normalize_per_reward(&rewards, cfg.mode, cfg.eps)?;
        for (i, ((r, toks), mask)) in rewards.iter().zip(&tokens).zip(&masks).enumerate() {
            let adv = advantage::token_advantages(&ga, mask, i)?;
            let scored = ScoredLine {
                id: &line.id,
                index: i,
                rewards: *r,
                reward_advantages: RewardVector { format: ga.format[i], acc: ga.acc[i], iou: ga.iou[i], zoom: ga.zoom[i] },
                summed_advantage: ga.summed[i],
                tokens: toks,
                glue: mask.flags().to_vec(),
                advantages: adv.values,
            };
            lines.push(io::record_line(&scored)?);
            n_rollouts += 1;
        }
    }
    io::write_atomic(&cfg.out, &io::join_lines(&lines))?;
    Ok(format!("scored {n_rollouts} rollouts in {} groups -> {}", groups.len(), cfg.out.display()))
}
