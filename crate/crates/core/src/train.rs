//! Desk-scale GRPO training on a learnable synthetic task.
//!
//! The policy writes a complete template rollout one symbol at a time:
//!
//! ```text
//! <think> </think> <answer> L </answer> <glue> [ ( d , d ) ] </glue>
//! ```
//!
//! where `L` is an option letter and each `d` is a whole second on a short
//! timeline. The text goes through the real parser, reward engine, zoom
//! planner and scripted client, so every reward the optimizer sees is
//! produced by the same code paths that score real rollouts.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::{self, AdvantageMode};
use crate::error::{Error, Result};
use crate::grpo::{self, KlEstimator, ObjectiveConfig, ScoredSample};
use crate::interval::{IntervalSet, TimeInterval};
use crate::planner::{BudgetConfig, ZoomPlanner};
use crate::policy::{ToyPolicy, Vocab};
use crate::response;
use crate::reward::{GroundTruth, RewardEngine, RewardVector};
use crate::sim::{Event, ScriptedClient, SyntheticEpisode};

const TAGS: [&str; 6] = ["<think>", "</think>", "<answer>", "</answer>", "<glue>", "</glue>"];
const PUNCT: [&str; 5] = ["[", "(", ",", ")", "]"];
const DIGITS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
const LETTERS: [&str; 4] = ["A", "B", "C", "D"];

/// Symbol vocabulary of the toy task.
pub fn toy_vocab() -> Vocab {
    let symbols = TAGS.iter().chain(&PUNCT).chain(&DIGITS).chain(&LETTERS).copied();
    Vocab::new(symbols).expect("toy vocabulary symbols are distinct")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskConfig {
    /// Number of distinct videos (policy prompts) trained on.
    pub n_prompts: usize,
    /// Questions per video. They share the timeline but have different
    /// answers, and the policy only sees the video, so its answer is a
    /// guess the way a coarse look at unreadable detail is.
    pub answer_variants: usize,
    pub context_order: usize,
    /// Initial logit bonus for the template's next symbol.
    pub structure_bias: f64,
    pub max_len: usize,
    pub detail_threshold: u32,
    pub planner: ZoomPlanner,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        Self {
            n_prompts: 1,
            answer_variants: 4,
            context_order: 2,
            structure_bias: 6.0,
            max_len: 16,
            detail_threshold: 8,
            // 10 s videos: the coarse pass gets 2 tokens per frame, a zoom
            // onto a few seconds gets 16 or more.
            planner: ZoomPlanner {
                budget: BudgetConfig { total_tokens: 64, min_tokens_per_frame: 2, max_tokens_per_frame: 32, fps: 4.0 },
                fine_fps: 1.0,
            },
        }
    }
}

/// Episodes plus everything needed to score the policy's rollouts.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub config: ToyTaskConfig,
    pub episodes: Vec<SyntheticEpisode>,
    vocab: Arc<Vocab>,
    client: ScriptedClient,
    gts: Vec<GroundTruth>,
}

impl ToyTask {
    /// Builds `config.n_prompts` 10-second videos from `seed`, each with a
    /// target event of 2–3 whole seconds, one distractor event and
    /// `config.answer_variants` episodes. Episode `e` belongs to video
    /// `e / answer_variants`.
    pub fn new(seed: u64, config: ToyTaskConfig) -> Result<Self> {
        config.planner.budget.validate()?;
        if config.n_prompts == 0 {
            return Err(Error::domain("toy task needs at least one prompt"));
        }
        if !(1..=LETTERS.len()).contains(&config.answer_variants) {
            return Err(Error::domain(format!("answer variants must be in 1..={}", LETTERS.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut episodes = Vec::with_capacity(config.n_prompts * config.answer_variants);
        for p in 0..config.n_prompts {
            episodes.extend(toy_video(&mut rng, p, config.answer_variants, config.detail_threshold)?);
        }
        let client = ScriptedClient::oracle(episodes.clone());
        let gts = episodes.iter().map(SyntheticEpisode::ground_truth).collect();
        Ok(Self { config, episodes, vocab: Arc::new(toy_vocab()), client, gts })
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Policy prompt (video) of an episode.
    pub fn prompt_of(&self, episode: usize) -> usize {
        episode / self.config.answer_variants
    }

    pub fn ground_truth(&self, episode: usize) -> &GroundTruth {
        &self.gts[episode]
    }

    /// Uniform policy nudged toward well-formed output by
    /// `structure_bias` on the template's next symbol(s).
    pub fn initial_policy(&self) -> Result<ToyPolicy> {
        let mut policy = ToyPolicy::uniform(self.vocab.clone(), self.config.context_order, self.config.n_prompts)?;
        let v = self.vocab.len();
        let order = self.config.context_order;
        let bos = v;
        let mut history = vec![0usize; order];
        for prompt in 0..self.config.n_prompts {
            for ctx in 0..(v + 1).pow(order as u32) {
                let mut rest = ctx;
                for slot in (0..order).rev() {
                    history[slot] = rest % (v + 1);
                    rest /= v + 1;
                }
                let prev: Vec<Option<&str>> =
                    history.iter().map(|&t| (t != bos).then(|| self.vocab.symbol(t))).collect();
                let favored = next_in_template(&prev);
                if favored.is_empty() {
                    continue;
                }
                let row_id = prompt * (v + 1).pow(order as u32) + ctx;
                let row = policy.logits_mut(row_id);
                for sym in favored {
                    row[self.vocab.id(sym).expect("template symbol in vocabulary")] += self.config.structure_bias;
                }
            }
        }
        Ok(policy)
    }

    pub fn sample<R: Rng + ?Sized>(&self, policy: &ToyPolicy, prompt: usize, rng: &mut R) -> Vec<usize> {
        policy.sample(prompt, self.vocab.id("</glue>"), self.config.max_len, rng)
    }

    pub fn render(&self, tokens: &[usize]) -> (String, Vec<String>) {
        let symbols = self.vocab.decode(tokens);
        (symbols.concat(), symbols)
    }

    /// Rewards and glue mask of one rollout for `episode`.
    pub fn score(&self, episode: usize, tokens: &[usize]) -> Result<(RewardVector, response::TokenSpanMap)> {
        let (text, symbols) = self.render(tokens);
        let engine = RewardEngine::new(&self.client, self.config.planner);
        let rewards = engine.score_text(&text, &self.gts[episode])?;
        let mask = response::glue_token_mask(&symbols, &text)?;
        Ok((rewards, mask))
    }
}

/// Symbols the template expects after the given history (oldest first,
/// `None` = before the start). Empty when the history is off-template.
fn next_in_template(prev: &[Option<&str>]) -> Vec<&'static str> {
    let last = prev.last().copied().flatten();
    let before = if prev.len() >= 2 { prev[prev.len() - 2] } else { None };
    let is_digit = |s: Option<&str>| s.is_some_and(|s| DIGITS.contains(&s));
    let is_letter = |s: Option<&str>| s.is_some_and(|s| LETTERS.contains(&s));
    match last {
        None => vec!["<think>"],
        Some("<think>") => vec!["</think>"],
        Some("</think>") => vec!["<answer>"],
        Some("<answer>") => LETTERS.to_vec(),
        Some(_) if is_letter(last) => vec!["</answer>"],
        Some("</answer>") => vec!["<glue>"],
        Some("<glue>") => vec!["["],
        Some("[") => vec!["("],
        Some("(") | Some(",") => DIGITS.to_vec(),
        Some(_) if is_digit(last) => match before {
            Some("(") => vec![","],
            Some(",") => vec![")"],
            _ => Vec::new(),
        },
        Some(")") => vec!["]"],
        Some("]") => vec!["</glue>"],
        _ => Vec::new(),
    }
}

fn toy_video<R: Rng + ?Sized>(
    rng: &mut R,
    index: usize,
    variants: usize,
    detail_threshold: u32,
) -> Result<Vec<SyntheticEpisode>> {
    let len = rng.gen_range(2..=3);
    let start = rng.gen_range(0..=(9 - len));
    let target = TimeInterval { start: f64::from(start), end: f64::from(start + len) };
    // Distractor in the larger free side, one second long.
    let distractor = if start >= 10 - (start + len) {
        TimeInterval { start: 0.0, end: 1.0 }
    } else {
        TimeInterval { start: 9.0, end: 10.0 }
    };
    let first = rng.gen_range(0..LETTERS.len());
    let details = ["17%", "29%", "42%", "64%", "88%"];
    (0..variants)
        .map(|v| {
            let answer = LETTERS[(first + v) % LETTERS.len()].to_string();
            let options: BTreeMap<String, String> = LETTERS
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let text = if *l == answer { details[4] } else { details[i] };
                    (l.to_string(), text.to_string())
                })
                .collect();
            let episode = SyntheticEpisode {
                id: format!("toy-{index}-{v}"),
                duration: 10.0,
                question: "What percentage is shown on the chart in the video?".into(),
                options,
                answer,
                gt_spans: IntervalSet::single(target.start, target.end)?,
                events: vec![
                    Event { span: target, category: "chart".into(), detail: details[4].into() },
                    Event { span: distractor, category: "sign".into(), detail: details[3].into() },
                ],
                detail_threshold,
            };
            episode.validate()?;
            Ok(episode)
        })
        .collect()
}

/// Parameter update applied to the objective's gradient (ascent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    #[default]
    Adam,
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p += lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub mode: AdvantageMode,
    pub kl_estimator: KlEstimator,
    pub clip: Option<f64>,
    pub update: UpdateRule,
    /// Groups sampled (with a fixed seed) for each trace record.
    pub eval_groups: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta: 0.04,
            group_size: 8,
            learning_rate: 0.005,
            steps: 1000,
            seed: 0,
            mode: AdvantageMode::TokenAdv,
            kl_estimator: KlEstimator::K3,
            clip: None,
            update: UpdateRule::Adam,
            eval_groups: 8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::domain("group size must be at least 2"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::domain("beta must be a non-negative number"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be a non-negative number"));
        }
        if self.eval_groups == 0 {
            return Err(Error::domain("need at least one evaluation group"));
        }
        Ok(())
    }

    fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig { beta: self.beta, kl: self.kl_estimator, clip: self.clip }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub mean_iou: f64,
    pub mean_acc: f64,
    pub mean_zoom: f64,
    pub mean_format: f64,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    /// Mean of `field` over records `[from, to)`.
    pub fn window_mean(&self, from: usize, to: usize, field: impl Fn(&TraceRecord) -> f64) -> f64 {
        let slice = &self.records[from.min(self.records.len())..to.min(self.records.len())];
        slice.iter().map(field).sum::<f64>() / slice.len().max(1) as f64
    }
}

/// Samples one group per episode, scores it and attaches per-token
/// advantages.
fn build_groups<R: Rng + ?Sized>(
    task: &ToyTask,
    policy: &ToyPolicy,
    episodes: impl IntoIterator<Item = usize>,
    cfg: &OptimizerConfig,
    rng: &mut R,
    totals: &mut RewardVector,
) -> Result<Vec<Vec<ScoredSample>>> {
    let mut groups = Vec::new();
    for episode in episodes {
        let prompt = task.prompt_of(episode);
        let mut samples = Vec::with_capacity(cfg.group_size);
        let mut rewards = Vec::with_capacity(cfg.group_size);
        let mut masks = Vec::with_capacity(cfg.group_size);
        for _ in 0..cfg.group_size {
            let tokens = task.sample(policy, prompt, rng);
            let (r, mask) = task.score(episode, &tokens)?;
            totals.format += r.format;
            totals.acc += r.acc;
            totals.iou += r.iou;
            totals.zoom += r.zoom;
            rewards.push(r);
            masks.push(mask);
            samples.push(tokens);
        }
        let ga = advantage::normalize_per_reward(&rewards, cfg.mode, advantage::DEFAULT_EPS)?;
        let group = samples
            .into_iter()
            .zip(&masks)
            .enumerate()
            .map(|(i, (tokens, mask))| {
                let adv = advantage::token_advantages(&ga, mask, i)?;
                Ok(ScoredSample { prompt, tokens, advantages: adv.values })
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push(group);
    }
    Ok(groups)
}

const EVAL_SEED_SALT: u64 = 0x5eed_e7a1;

/// Metrics of `policy` on a fixed-seed evaluation batch: the same random
/// stream every call, so the record depends only on the parameters.
fn evaluate_record(
    task: &ToyTask,
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    cfg: &OptimizerConfig,
    step: usize,
) -> Result<TraceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_SEED_SALT);
    let mut totals = RewardVector::default();
    let episodes = (0..cfg.eval_groups).map(|g| g % task.n_episodes());
    let groups = build_groups(task, policy, episodes, cfg, &mut rng, &mut totals)?;
    let mut grad = vec![0.0; policy.n_params()];
    let parts = grpo::evaluate(policy, policy, reference, &groups, &cfg.objective(), Some(&mut grad))?;
    let n = (cfg.eval_groups * cfg.group_size) as f64;
    Ok(TraceRecord {
        step,
        mean_iou: totals.iou / n,
        mean_acc: totals.acc / n,
        mean_zoom: totals.zoom / n,
        mean_format: totals.format / n,
        objective: parts.objective,
        grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

/// Plain gradient ascent on the GRPO objective: each step samples one group
/// from the current policy (which is also the old policy for that step),
/// scores it, and takes one update. The reference policy is the initial
/// policy. The trace has `steps + 1` records; record `k` describes the
/// parameters after `k` updates.
pub fn train_loop(task: &ToyTask, cfg: &OptimizerConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    let reference = task.initial_policy()?;
    let mut policy = reference.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = TrainingTrace::default();
    let objective = cfg.objective();
    let mut adam = Adam::new(policy.n_params());
    for step in 0..=cfg.steps {
        trace.records.push(evaluate_record(task, &policy, &reference, cfg, step)?);
        if step == cfg.steps {
            break;
        }
        let variant = rng.gen_range(0..task.config.answer_variants);
        let episode = (step % task.config.n_prompts) * task.config.answer_variants + variant;
        let mut totals = RewardVector::default();
        let groups = build_groups(task, &policy, [episode], cfg, &mut rng, &mut totals)?;
        let old = policy.clone();
        let grad = grpo::grpo_gradient(&policy, &old, &reference, &groups, &objective)?;
        match cfg.update {
            UpdateRule::Sgd => policy.params.iter_mut().zip(&grad).for_each(|(p, g)| *p += cfg.learning_rate * g),
            UpdateRule::Adam => adam.step(&mut policy.params, &grad, cfg.learning_rate),
        }
    }
    Ok(trace)
}
