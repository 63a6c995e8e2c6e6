//! Deterministic synthetic grounded-QA environment.
//!
//! An episode is a timeline of non-overlapping events. The question targets
//! one event and asks for a small detail shown during it. The scripted client
//! can read that detail only if at least one requested frame falls inside
//! the event *and* frames are rendered with at least
//! `detail_threshold` tokens. Thresholds are drawn between the coarse and
//! fine per-frame resolutions, so the detail is invisible to a whole-video
//! pass and visible to a zoomed pass over the right span.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::client::{ClientRequest, ClientResponse, FrameSpec, PolicyClient, Template};
use crate::error::{ClientError, Error, Result};
use crate::interval::{IntervalSet, TimeInterval};
use crate::planner::ZoomPlanner;
use crate::reward::{GroundTruth, Rollout, RolloutGroup};

const CATEGORIES: &[&str] = &[
    "chart", "sign", "scoreboard", "label", "screen", "poster", "menu", "clock", "map", "banner", "receipt", "dial",
];
const LETTERS: &[&str] = &["A", "B", "C", "D"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "span_s")]
    pub span: TimeInterval,
    pub category: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEpisode {
    pub id: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub answer: String,
    #[serde(rename = "gt_spans_s")]
    pub gt_spans: IntervalSet,
    pub events: Vec<Event>,
    #[serde(rename = "detail_threshold")]
    pub detail_threshold: u32,
}

impl SyntheticEpisode {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            id: self.id.clone(),
            duration: self.duration,
            question: self.question.clone(),
            options: self.options.clone(),
            answer: self.answer.clone(),
            gt_spans: self.gt_spans.clone(),
        }
    }

    pub fn target(&self) -> &Event {
        let detail = &self.options[&self.answer];
        self.events
            .iter()
            .find(|e| &e.detail == detail && self.question.contains(&e.category))
            .expect("episode invariant: the answer names a target event")
    }

    /// Checks every structural invariant of an episode.
    pub fn validate(&self) -> Result<()> {
        self.ground_truth().validate()?;
        let bad = |m: &str| Err(Error::domain(format!("{}: {m}", self.id)));
        let mut spans: Vec<TimeInterval> = self.events.iter().map(|e| e.span).collect();
        spans.sort_by(|a, b| a.start.total_cmp(&b.start));
        if spans.windows(2).any(|w| w[0].end > w[1].start) {
            return bad("events overlap");
        }
        if spans.iter().any(|s| s.start < 0.0 || s.end > self.duration) {
            return bad("event outside the video");
        }
        let matching: Vec<&Event> = self.events.iter().filter(|e| self.question.contains(&e.category)).collect();
        if matching.len() != 1 {
            return bad("question must match exactly one event");
        }
        let target = matching[0];
        if !IntervalSet::single(target.span.start, target.span.end)?.approx_eq(&self.gt_spans) {
            return bad("ground truth differs from the target event span");
        }
        if self.options.get(&self.answer) != Some(&target.detail) {
            return bad("answer does not name the target detail");
        }
        Ok(())
    }
}

/// Knobs for [`generate_episode_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub duration_range: (f64, f64),
    pub n_events: usize,
    pub min_event_s: f64,
    pub max_event_s: f64,
    pub planner: ZoomPlanner,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            duration_range: (60.0, 600.0),
            n_events: 3,
            min_event_s: 2.0,
            max_event_s: 30.0,
            planner: ZoomPlanner::default(),
        }
    }
}

/// Episode with default budget and event lengths.
pub fn generate_episode(seed: u64, duration_range: (f64, f64), n_events: usize) -> Result<SyntheticEpisode> {
    generate_episode_with(seed, &EpisodeConfig { duration_range, n_events, ..Default::default() })
}

/// Event lengths and placements are drawn on a 0.1 s grid.
pub fn generate_episode_with(seed: u64, cfg: &EpisodeConfig) -> Result<SyntheticEpisode> {
    let (lo, hi) = cfg.duration_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
        return Err(Error::domain(format!("invalid duration range ({lo}, {hi})")));
    }
    if cfg.n_events == 0 || cfg.n_events > CATEGORIES.len() {
        return Err(Error::domain(format!("n_events must be in 1..={}", CATEGORIES.len())));
    }
    if !(0.0 < cfg.min_event_s && cfg.min_event_s <= cfg.max_event_s) {
        return Err(Error::domain("invalid event length range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration_ds = (rng.gen_range(lo..=hi) * 10.0).round() as i64;
    let n = cfg.n_events as i64;
    let min_ds = (cfg.min_event_s * 10.0).ceil() as i64;
    let max_ds = ((cfg.max_event_s * 10.0).floor() as i64).min(duration_ds / (2 * n));
    if max_ds < min_ds {
        return Err(Error::domain(format!(
            "cannot pack {} events of at least {} s into {} s",
            cfg.n_events,
            cfg.min_event_s,
            duration_ds as f64 / 10.0
        )));
    }
    let duration = duration_ds as f64 / 10.0;
    let coarse = cfg.planner.coarse(duration)?.tokens_per_frame;

    let lengths: Vec<i64> = (0..n).map(|_| rng.gen_range(min_ds..=max_ds)).collect();
    let free = duration_ds - lengths.iter().sum::<i64>();
    let mut cuts: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut events = Vec::with_capacity(cfg.n_events);
    let mut categories: Vec<&str> = CATEGORIES.to_vec();
    categories.shuffle(&mut rng);
    let (mut cursor, mut used_gap) = (0i64, 0i64);
    for (k, len) in lengths.iter().enumerate() {
        cursor += cuts[k] - used_gap;
        used_gap = cuts[k];
        let span = TimeInterval { start: cursor as f64 / 10.0, end: (cursor + len) as f64 / 10.0 };
        cursor += len;
        events.push(Event { span, category: categories[k].to_string(), detail: String::new() });
    }

    // Details are percentages; options are four distinct ones.
    let mut pool: Vec<u32> = (1..100).collect();
    pool.shuffle(&mut rng);
    for (e, v) in events.iter_mut().zip(&pool) {
        e.detail = format!("{v}%");
    }
    let target_ix = rng.gen_range(0..events.len());
    let target = events[target_ix].clone();
    let answer = LETTERS[rng.gen_range(0..LETTERS.len())].to_string();
    let mut distractors = pool[events.len()..].iter().map(|v| format!("{v}%"));
    let options: BTreeMap<String, String> = LETTERS
        .iter()
        .map(|l| {
            let text = if *l == answer { target.detail.clone() } else { distractors.next().unwrap() };
            (l.to_string(), text)
        })
        .collect();

    let gt_spans = IntervalSet::single(target.span.start, target.span.end)?;
    let fine = cfg.planner.fine(&gt_spans)?.tokens_per_frame;
    if fine <= coarse {
        return Err(Error::domain(format!(
            "target event too long: fine resolution {fine} does not exceed coarse {coarse}"
        )));
    }
    let detail_threshold = rng.gen_range(coarse + 1..=fine);

    let episode = SyntheticEpisode {
        id: format!("sim-{seed}"),
        duration,
        question: format!("What percentage is shown on the {} in the video?", target.category),
        options,
        answer,
        gt_spans,
        events,
        detail_threshold,
    };
    Ok(episode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientMode {
    Oracle,
    /// Oracle answers flipped to a wrong option with this probability.
    Noisy(f64),
    /// Replies that never contain a readable answer.
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedClientConfig {
    pub mode: ClientMode,
    pub noise_seed: u64,
}

impl Default for ScriptedClientConfig {
    fn default() -> Self {
        Self { mode: ClientMode::Oracle, noise_seed: 0 }
    }
}

/// Confidence the scripted model reports for its answer.
const CONF_READ: f64 = 0.9;
const CONF_BLURRY: f64 = 0.55;
const CONF_MISS: f64 = 0.25;

/// What the scripted model perceives from a frame request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Perception {
    pub sees_event: bool,
    pub reads_detail: bool,
}

pub fn perceive(episode: &SyntheticEpisode, frames: &FrameSpec) -> Perception {
    let target = episode.target().span;
    let sees_event = frames.frame_times().iter().any(|t| target.contains(*t));
    let reads_detail = sees_event && frames.tokens_per_frame >= episode.detail_threshold;
    Perception { sees_event, reads_detail }
}

fn wrong_option(episode: &SyntheticEpisode) -> &str {
    episode.options.keys().find(|k| **k != episode.answer).map(String::as_str).unwrap_or(&episode.answer)
}

/// Oracle reply for one request: the correct letter iff the detail is
/// readable, otherwise a fixed wrong option. Coarse replies also carry glue
/// spans for whatever part of the target event was seen.
pub fn scripted_answer(episode: &SyntheticEpisode, frames: &FrameSpec, template: Template) -> (String, f64) {
    let seen = perceive(episode, frames);
    let letter = if seen.reads_detail { episode.answer.as_str() } else { wrong_option(episode) };
    let target = episode.target();
    let think = if seen.sees_event {
        format!(
            "The {} is visible around <time>({}, {})</time>.",
            target.category, target.span.start, target.span.end
        )
    } else {
        "Nothing relevant is visible.".to_string()
    };
    let mut text = format!("<think>{think}</think><answer>{letter}</answer>");
    if template == Template::Coarse {
        let glue = if seen.sees_event {
            IntervalSet::single(target.span.start, target.span.end)
                .map(|s| s.intersect(&frames.spans_s))
                .unwrap_or_default()
        } else {
            IntervalSet::empty()
        };
        text.push_str(&format!("<glue>{}</glue>", glue));
    }
    let conf = match (seen.sees_event, seen.reads_detail) {
        (_, true) => CONF_READ,
        (true, false) => CONF_BLURRY,
        _ => CONF_MISS,
    };
    (text, conf.ln())
}

fn stable_hash(seed: u64, s: &str) -> u64 {
    // FNV-1a, mixed with the seed.
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// In-process [`PolicyClient`] over a set of episodes, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    episodes: HashMap<String, SyntheticEpisode>,
    pub config: ScriptedClientConfig,
}

impl ScriptedClient {
    pub fn new(episodes: impl IntoIterator<Item = SyntheticEpisode>, config: ScriptedClientConfig) -> Self {
        Self { episodes: episodes.into_iter().map(|e| (e.id.clone(), e)).collect(), config }
    }

    pub fn oracle(episodes: impl IntoIterator<Item = SyntheticEpisode>) -> Self {
        Self::new(episodes, ScriptedClientConfig::default())
    }

    pub fn episode(&self, id: &str) -> Option<&SyntheticEpisode> {
        self.episodes.get(id)
    }
}

impl PolicyClient for ScriptedClient {
    fn query(&self, request: &ClientRequest) -> Result<ClientResponse, ClientError> {
        let episode = self
            .episodes
            .get(&request.video_ref)
            .ok_or_else(|| ClientError::Protocol(format!("unknown video_ref {}", request.video_ref)))?;
        let (mut text, mut logprob) = scripted_answer(episode, &request.frame_spec, request.template);
        match self.config.mode {
            ClientMode::Oracle => {}
            ClientMode::Noisy(rate) => {
                let key = format!("{}|{}", request.id, serde_json::to_string(&request.frame_spec).unwrap_or_default());
                let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(self.config.noise_seed, &key));
                if rng.gen_bool(rate.clamp(0.0, 1.0)) {
                    let right = format!("<answer>{}</answer>", episode.answer);
                    let wrong = format!("<answer>{}</answer>", wrong_option(episode));
                    text = if text.contains(&right) { text.replace(&right, &wrong) } else { text.replace(&wrong, &right) };
                    logprob = CONF_BLURRY.ln();
                }
            }
            ClientMode::Adversarial => {
                text = "<think>unreadable</think><answer>".to_string();
                logprob = CONF_MISS.ln();
            }
        }
        Ok(ClientResponse { id: request.id.clone(), text, answer_token_logprob: Some(logprob) })
    }
}

/// Kinds of hand-built rollouts used as reward fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutKind {
    /// Correct answer, glue equal to the target span.
    Exact,
    /// Correct answer, glue shifted by half the span length (IoU 1/3).
    Shifted,
    /// Correct answer, no glue spans.
    Empty,
    /// Missing the closing glue tag.
    Malformed,
    /// Wrong answer, exact glue.
    WrongAnswer,
    /// Correct answer, glue on a different part of the video.
    Disjoint,
}

fn glue_for(episode: &SyntheticEpisode, kind: RolloutKind) -> IntervalSet {
    let t = episode.target().span;
    let len = t.measure();
    match kind {
        RolloutKind::Exact | RolloutKind::WrongAnswer | RolloutKind::Malformed => episode.gt_spans.clone(),
        RolloutKind::Shifted => {
            let (a, b) = if t.end + len / 2.0 <= episode.duration {
                (t.start + len / 2.0, t.end + len / 2.0)
            } else {
                (t.start - len / 2.0, t.end - len / 2.0)
            };
            IntervalSet::single(a, b).unwrap_or_default()
        }
        RolloutKind::Empty => IntervalSet::empty(),
        RolloutKind::Disjoint => {
            let complement = IntervalSet::single(0.0, episode.duration)
                .unwrap_or_default()
                .intervals()
                .iter()
                .flat_map(|w| [TimeInterval::new(w.start, t.start), TimeInterval::new(t.end, w.end)])
                .filter(|iv| iv.measure() > 0.0)
                .max_by(|a, b| a.measure().total_cmp(&b.measure()));
            match complement {
                Some(iv) => {
                    // Keep clear of the target so no frame can land on it.
                    let pad = (iv.measure() * 0.1).min(1.0);
                    IntervalSet::single(iv.start + pad, iv.end - pad).unwrap_or_default()
                }
                None => IntervalSet::empty(),
            }
        }
    }
}

/// Builds a template-shaped rollout of the given kind.
pub fn scripted_rollout(episode: &SyntheticEpisode, kind: RolloutKind) -> Rollout {
    let glue = glue_for(episode, kind);
    let letter = if kind == RolloutKind::WrongAnswer { wrong_option(episode) } else { &episode.answer };
    let target = episode.target();
    let think = format!(
        "The {} shows the value near <time>({}, {})</time>.",
        target.category, target.span.start, target.span.end
    );
    let spans: Vec<String> = glue.intervals().iter().map(|iv| format!("({}, {})", iv.start, iv.end)).collect();
    let closing = if kind == RolloutKind::Malformed { "" } else { "</glue>" };
    let text = format!("<think>{think}</think><answer>{letter}</answer><glue>[{}]{closing}", spans.join(", "));
    Rollout::from_text(text)
}

/// A group of `g` scripted rollouts. Oracle groups are `g` exact copies;
/// adversarial groups open with exact, shifted, empty and malformed
/// rollouts; the rest is drawn from the well-formed kinds with `seed`.
pub fn scripted_rollout_group(episode: &SyntheticEpisode, g: usize, mode: ClientMode, seed: u64) -> Result<RolloutGroup> {
    if g < 2 {
        return Err(Error::domain("a rollout group needs at least 2 rollouts"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let valid = [RolloutKind::Exact, RolloutKind::Shifted, RolloutKind::Empty, RolloutKind::WrongAnswer, RolloutKind::Disjoint];
    let kinds: Vec<RolloutKind> = match mode {
        ClientMode::Oracle => vec![RolloutKind::Exact; g],
        ClientMode::Noisy(_) => (0..g).map(|_| *valid.choose(&mut rng).unwrap()).collect(),
        ClientMode::Adversarial => {
            let lead = [RolloutKind::Exact, RolloutKind::Shifted, RolloutKind::Empty, RolloutKind::Malformed];
            (0..g).map(|i| if i < lead.len() { lead[i] } else { *valid.choose(&mut rng).unwrap() }).collect()
        }
    };
    Ok(RolloutGroup {
        prompt_id: episode.id.clone(),
        rollouts: kinds.into_iter().map(|k| scripted_rollout(episode, k)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::iou;
    use crate::response::{format_reward, parse_response};

    fn episode(seed: u64) -> SyntheticEpisode {
        generate_episode(seed, (60.0, 600.0), 3).unwrap()
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        assert_eq!(episode(7), episode(7));
        assert_ne!(episode(7), episode(8));
        for seed in 0..200 {
            episode(seed).validate().unwrap();
        }
        let one = generate_episode(3, (30.0, 40.0), 1).unwrap();
        assert_eq!(one.gt_spans.to_pairs(), vec![(one.events[0].span.start, one.events[0].span.end)]);
    }

    #[test]
    fn infeasible_packing_is_an_error() {
        assert!(generate_episode(1, (5.0, 5.0), 3).is_err());
        assert!(generate_episode(1, (10.0, 5.0), 1).is_err());
    }

    #[test]
    fn thresholds_separate_coarse_and_fine() {
        let planner = ZoomPlanner::default();
        for seed in 0..50 {
            let ep = episode(seed);
            let coarse = planner.coarse(ep.duration).unwrap().tokens_per_frame;
            let fine = planner.fine(&ep.gt_spans).unwrap().tokens_per_frame;
            assert!(coarse < ep.detail_threshold && ep.detail_threshold <= fine);
        }
    }

    #[test]
    fn oracle_answers() {
        let ep = episode(11);
        let planner = ZoomPlanner::default();
        let fine = planner.fine(&ep.gt_spans).unwrap();
        let spec = FrameSpec::from_plan(&fine, &ep.gt_spans);
        let (text, _) = scripted_answer(&ep, &spec, Template::Fine);
        assert!(text.contains(&format!("<answer>{}</answer>", ep.answer)));

        let whole = IntervalSet::single(0.0, ep.duration).unwrap();
        let coarse = planner.coarse(ep.duration).unwrap();
        let spec = FrameSpec::from_plan(&coarse, &whole);
        assert!(perceive(&ep, &spec).sees_event);
        let (text, _) = scripted_answer(&ep, &spec, Template::Coarse);
        assert!(!text.contains(&format!("<answer>{}</answer>", ep.answer)));

        let away = glue_for(&ep, RolloutKind::Disjoint);
        let spec = FrameSpec::from_plan(&planner.fine(&away).unwrap(), &away);
        let (text, _) = scripted_answer(&ep, &spec, Template::Fine);
        assert!(!text.contains(&format!("<answer>{}</answer>", ep.answer)));
    }

    #[test]
    fn rollout_groups() {
        let ep = episode(5);
        let letters = ep.ground_truth().option_letters().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let opts: Vec<&str> = letters.iter().map(String::as_str).collect();

        let oracle = scripted_rollout_group(&ep, 4, ClientMode::Oracle, 0).unwrap();
        assert!(oracle.rollouts.windows(2).all(|w| w[0] == w[1]));

        let adv = scripted_rollout_group(&ep, 6, ClientMode::Adversarial, 0).unwrap();
        assert_eq!(format_reward(&adv.rollouts[3].text, &opts), 0.0);
        let shifted = parse_response(&adv.rollouts[1].text, &opts).unwrap();
        assert!((iou(&shifted.glue_spans, &ep.gt_spans).unwrap() - 1.0 / 3.0).abs() < 1e-9);

        let noisy = scripted_rollout_group(&ep, 16, ClientMode::Noisy(0.1), 3).unwrap();
        assert!(noisy.rollouts.iter().all(|r| parse_response(&r.text, &opts).is_ok()));
        assert!(scripted_rollout_group(&ep, 1, ClientMode::Oracle, 0).is_err());
    }

    #[test]
    fn client_modes() {
        let ep = episode(9);
        let planner = ZoomPlanner::default();
        let spec = FrameSpec::from_plan(&planner.fine(&ep.gt_spans).unwrap(), &ep.gt_spans);
        let req = ClientRequest {
            id: "r".into(),
            question: ep.question.clone(),
            options: ep.options.clone(),
            video_ref: ep.id.clone(),
            frame_spec: spec,
            template: Template::Fine,
        };
        let oracle = ScriptedClient::oracle([ep.clone()]);
        assert_eq!(oracle.query(&req).unwrap(), oracle.query(&req).unwrap());
        let adversarial = ScriptedClient::new([ep.clone()], ScriptedClientConfig { mode: ClientMode::Adversarial, noise_seed: 0 });
        assert!(!adversarial.query(&req).unwrap().text.contains("</answer>"));
        let always_flip = ScriptedClient::new([ep.clone()], ScriptedClientConfig { mode: ClientMode::Noisy(1.0), noise_seed: 4 });
        assert!(!always_flip.query(&req).unwrap().text.contains(&format!("<answer>{}</answer>", ep.answer)));
        let missing = ClientRequest { video_ref: "nope".into(), ..req };
        assert!(matches!(oracle.query(&missing), Err(ClientError::Protocol(_))));
    }

    #[test]
    fn episode_json_round_trip() {
        let ep = episode(21);
        let line = serde_json::to_string(&ep).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for key in ["id", "duration_s", "question", "options", "answer", "gt_spans_s", "events", "detail_threshold"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: SyntheticEpisode = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ep);
    }
}
