//! The four per-rollout rewards: format, answer accuracy, grounding IoU and
//! the zoom-in accuracy obtained from a second, fine-resolution pass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::client::{ClientRequest, FrameSpec, PolicyClient, Template};
use crate::error::{ClientError, Error, Result};
use crate::interval::{self, IntervalSet, EPS};
use crate::planner::ZoomPlanner;
use crate::response::{self, ResponseView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Format,
    Acc,
    Iou,
    Zoom,
}

impl RewardKind {
    pub const ALL: [RewardKind; 4] = [RewardKind::Format, RewardKind::Acc, RewardKind::Iou, RewardKind::Zoom];
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub format: f64,
    pub acc: f64,
    pub iou: f64,
    pub zoom: f64,
}

impl RewardVector {
    pub fn get(&self, kind: RewardKind) -> f64 {
        match kind {
            RewardKind::Format => self.format,
            RewardKind::Acc => self.acc,
            RewardKind::Iou => self.iou,
            RewardKind::Zoom => self.zoom,
        }
    }

    pub fn sum(&self) -> f64 {
        self.format + self.acc + self.iou + self.zoom
    }
}

/// One multiple-choice grounded question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub answer: String,
    #[serde(rename = "gt_spans_s")]
    pub gt_spans: IntervalSet,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::domain(format!("{}: duration must be positive", self.id)));
        }
        if !self.options.contains_key(&self.answer) {
            return Err(Error::domain(format!("{}: answer {} is not an option", self.id, self.answer)));
        }
        if self.gt_spans.measure() <= EPS {
            return Err(Error::domain(format!("{}: ground-truth spans are empty", self.id)));
        }
        let inside = self.gt_spans.intervals().iter().all(|iv| iv.start >= -EPS && iv.end <= self.duration + EPS);
        if !inside {
            return Err(Error::domain(format!("{}: ground-truth spans exceed [0, duration]", self.id)));
        }
        Ok(())
    }

    pub fn option_letters(&self) -> Vec<&str> {
        self.options.keys().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Rollout {
    /// Tokenizes with [`response::symbol_tokens`].
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = response::symbol_tokens(&text);
        Rollout { text, tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_id: String,
    pub rollouts: Vec<Rollout>,
}

/// Grounding reward: IoU of the glue spans (clamped to the video) with the
/// ground truth.
pub fn iou_reward(resp: &impl ResponseView, gt: &GroundTruth) -> f64 {
    let pred = resp.glue().clamp(0.0, gt.duration);
    if pred.is_empty() {
        return 0.0;
    }
    interval::iou(&pred, &gt.gt_spans).unwrap_or(0.0)
}

pub fn acc_reward(resp: &impl ResponseView, gt: &GroundTruth) -> f64 {
    match resp.answer() {
        Some(a) if a == gt.answer => 1.0,
        _ => 0.0,
    }
}

/// Second-pass request for the glue spans, or `None` when there is no
/// evidence to zoom into.
pub fn zoom_request(resp: &impl ResponseView, gt: &GroundTruth, planner: &ZoomPlanner) -> Option<ClientRequest> {
    let spans = resp.glue().clamp(0.0, gt.duration);
    let plan = planner.fine(&spans).ok()?;
    Some(ClientRequest {
        id: format!("{}/zoom/{}", gt.id, spans),
        question: gt.question.clone(),
        options: gt.options.clone(),
        video_ref: gt.id.clone(),
        frame_spec: FrameSpec::from_plan(&plan, &spans),
        template: Template::Fine,
    })
}

/// 1 iff the fine pass over the glue spans answers correctly. Empty glue
/// scores 0 without contacting the client.
pub fn zoom_reward(
    resp: &impl ResponseView,
    gt: &GroundTruth,
    client: &dyn PolicyClient,
    planner: &ZoomPlanner,
) -> Result<f64, ClientError> {
    let Some(request) = zoom_request(resp, gt, planner) else {
        return Ok(0.0);
    };
    let reply = client.query(&request)?;
    let letters = gt.option_letters();
    let fine = response::extract_lenient(&reply.text, &letters);
    Ok(acc_reward(&fine, gt))
}

/// What to do when the zoom client fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientFailurePolicy {
    /// Retry this many times, then score the zoom reward as 0.
    RetryThenZero(u32),
    Propagate,
}

impl Default for ClientFailurePolicy {
    fn default() -> Self {
        ClientFailurePolicy::RetryThenZero(1)
    }
}

/// Scores rollouts against one ground truth.
pub struct RewardEngine<'a> {
    pub client: &'a dyn PolicyClient,
    pub planner: ZoomPlanner,
    pub on_client_error: ClientFailurePolicy,
}

impl<'a> RewardEngine<'a> {
    pub fn new(client: &'a dyn PolicyClient, planner: ZoomPlanner) -> Self {
        Self { client, planner, on_client_error: ClientFailurePolicy::default() }
    }

    fn zoom_with_policy(&self, resp: &impl ResponseView, gt: &GroundTruth) -> Result<f64> {
        let attempts = match self.on_client_error {
            ClientFailurePolicy::RetryThenZero(n) => n + 1,
            ClientFailurePolicy::Propagate => 1,
        };
        let mut last = None;
        for _ in 0..attempts {
            match zoom_reward(resp, gt, self.client, &self.planner) {
                Ok(z) => return Ok(z),
                Err(e) => last = Some(e),
            }
        }
        match (self.on_client_error, last) {
            (ClientFailurePolicy::Propagate, Some(e)) => Err(e.into()),
            _ => Ok(0.0),
        }
    }

    /// All four rewards for one rollout. Format failures still get
    /// best-effort answer and glue extraction.
    pub fn score_text(&self, text: &str, gt: &GroundTruth) -> Result<RewardVector> {
        let letters = gt.option_letters();
        let format = response::format_reward(text, &letters);
        let parsed = response::parse_or_extract(text, &letters);
        Ok(RewardVector {
            format,
            acc: acc_reward(&parsed, gt),
            iou: iou_reward(&parsed, gt),
            zoom: self.zoom_with_policy(&parsed, gt)?,
        })
    }

    /// One reward vector per rollout, in input order.
    pub fn score_group(&self, group: &RolloutGroup, gt: &GroundTruth) -> Result<Vec<RewardVector>> {
        group.rollouts.iter().map(|r| self.score_text(&r.text, gt)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{ClientResponse, NullClient};
    use crate::response::PartialResponse;
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn gt() -> GroundTruth {
        GroundTruth {
            id: "q".into(),
            duration: 20.0,
            question: "which?".into(),
            options: [("A", "a"), ("B", "b")].map(|(k, v)| (k.to_string(), v.to_string())).into(),
            answer: "A".into(),
            gt_spans: IntervalSet::single(5.0, 15.0).unwrap(),
        }
    }

    fn partial(answer: Option<&str>, spans: &[(f64, f64)]) -> PartialResponse {
        PartialResponse {
            answer_letter: answer.map(str::to_string),
            glue_spans: IntervalSet::normalize(spans.iter().copied()).unwrap(),
        }
    }

    /// Answers `A` iff any requested frame lies in [5, 15].
    struct CoverageClient(AtomicUsize);

    impl PolicyClient for CoverageClient {
        fn query(&self, req: &ClientRequest) -> Result<ClientResponse, ClientError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            let hit = req.frame_spec.frame_times().iter().any(|t| (5.0..=15.0).contains(t));
            let letter = if hit { "A" } else { "B" };
            Ok(ClientResponse { id: req.id.clone(), text: format!("<answer>{letter}</answer>"), answer_token_logprob: None })
        }
    }

    struct FlakyClient(AtomicUsize);

    impl PolicyClient for FlakyClient {
        fn query(&self, req: &ClientRequest) -> Result<ClientResponse, ClientError> {
            if self.0.fetch_add(1, Ordering::SeqCst) == 0 {
                return Err(ClientError::Timeout("slow".into()));
            }
            Ok(ClientResponse { id: req.id.clone(), text: "<answer>A</answer>".into(), answer_token_logprob: None })
        }
    }

    #[test]
    fn iou_reward_examples() {
        let g = GroundTruth { gt_spans: IntervalSet::single(20.3, 30.8).unwrap(), duration: 40.0, ..gt() };
        assert_eq!(iou_reward(&partial(None, &[(20.3, 30.8)]), &g), 1.0);
        assert!((iou_reward(&partial(None, &[(0.0, 10.0)]), &gt()) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou_reward(&partial(None, &[(18.0, 25.0)]), &gt()), 0.0);
        assert_eq!(iou_reward(&partial(None, &[]), &gt()), 0.0);
        // Clamping shrinks the union: (-10, 15) -> (0, 15), IoU 10/15.
        assert!((iou_reward(&partial(None, &[(-10.0, 15.0)]), &gt()) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn acc_reward_examples() {
        assert_eq!(acc_reward(&partial(Some("A"), &[]), &gt()), 1.0);
        assert_eq!(acc_reward(&partial(Some("B"), &[]), &gt()), 0.0);
        assert_eq!(acc_reward(&partial(None, &[]), &gt()), 0.0);
    }

    #[test]
    fn zoom_reward_follows_coverage() {
        let client = CoverageClient(AtomicUsize::new(0));
        let planner = ZoomPlanner::default();
        assert_eq!(zoom_reward(&partial(None, &[(6.0, 9.0)]), &gt(), &client, &planner).unwrap(), 1.0);
        assert_eq!(zoom_reward(&partial(None, &[(16.0, 19.0)]), &gt(), &client, &planner).unwrap(), 0.0);
        let calls = client.0.load(Ordering::SeqCst);
        assert_eq!(zoom_reward(&partial(Some("A"), &[]), &gt(), &client, &planner).unwrap(), 0.0);
        assert_eq!(client.0.load(Ordering::SeqCst), calls, "empty glue must not reach the client");
    }

    #[test]
    fn client_failure_policies() {
        let planner = ZoomPlanner::default();
        let resp = partial(None, &[(6.0, 9.0)]);
        let flaky = FlakyClient(AtomicUsize::new(0));
        let engine = RewardEngine::new(&flaky, planner);
        assert_eq!(engine.zoom_with_policy(&resp, &gt()).unwrap(), 1.0);

        let engine = RewardEngine::new(&NullClient, planner);
        assert_eq!(engine.zoom_with_policy(&resp, &gt()).unwrap(), 0.0);
        let strict = RewardEngine { on_client_error: ClientFailurePolicy::Propagate, ..engine };
        assert!(matches!(strict.zoom_with_policy(&resp, &gt()), Err(Error::Client(_))));
    }

    #[test]
    fn score_group_is_total_and_ordered() {
        let client = CoverageClient(AtomicUsize::new(0));
        let engine = RewardEngine::new(&client, ZoomPlanner::default());
        let good = "<think>x</think><answer>A</answer><glue>[(5, 15)]</glue>";
        let wrong = "<think>x</think><answer>B</answer><glue>[(5, 15)]</glue>";
        let group = RolloutGroup {
            prompt_id: "q".into(),
            rollouts: vec![Rollout::from_text(good), Rollout::from_text(wrong), Rollout::from_text("garbage")],
        };
        let v = engine.score_group(&group, &gt()).unwrap();
        assert_eq!(v[0], RewardVector { format: 1.0, acc: 1.0, iou: 1.0, zoom: 1.0 });
        assert_eq!(v[1], RewardVector { format: 1.0, acc: 0.0, iou: 1.0, zoom: 1.0 });
        assert_eq!(v[2], RewardVector::default());
    }

    #[test]
    fn lenient_scoring_on_format_failure() {
        let client = CoverageClient(AtomicUsize::new(0));
        let engine = RewardEngine::new(&client, ZoomPlanner::default());
        let sloppy = "I think <answer>A</answer><glue>[(5, 15)]</glue> done";
        let v = engine.score_text(sloppy, &gt()).unwrap();
        assert_eq!(v, RewardVector { format: 0.0, acc: 1.0, iou: 1.0, zoom: 1.0 });
    }

    #[test]
    fn ground_truth_validation() {
        assert!(gt().validate().is_ok());
        assert!(GroundTruth { answer: "Z".into(), ..gt() }.validate().is_err());
        assert!(GroundTruth { gt_spans: IntervalSet::empty(), ..gt() }.validate().is_err());
        assert!(GroundTruth { duration: 10.0, ..gt() }.validate().is_err());
    }
}
