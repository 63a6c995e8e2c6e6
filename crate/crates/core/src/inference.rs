//! Test-time schedules built on the planner: a single coarse-to-fine zoom,
//! and divide-and-conquer over fixed windows for long videos.

use serde::{Deserialize, Serialize};

use crate::client::{ClientRequest, FrameSpec, PolicyClient};
use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::planner::{self, WindowResult, ZoomPlan, ZoomPlanner};
use crate::response;
use crate::reward::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomOutcome {
    /// Spans the final pass looked at.
    pub spans: IntervalSet,
    /// Answer from the first (coarse) look, if any.
    pub coarse_answer: Option<String>,
    pub final_answer: Option<String>,
    pub coarse_plan: ZoomPlan,
    pub fine_plan: Option<ZoomPlan>,
    /// Per-window results; empty for the single-pass schedule.
    pub windows: Vec<WindowResult>,
}

fn request(query: &GroundTruth, tag: &str, plan: &ZoomPlan, spans: &IntervalSet) -> ClientRequest {
    ClientRequest {
        id: format!("{}/{tag}", query.id),
        question: query.question.clone(),
        options: query.options.clone(),
        video_ref: query.id.clone(),
        frame_spec: FrameSpec::from_plan(plan, spans),
        template: plan.pass.into(),
    }
}

/// Fine pass over `spans`; `None` when there is nothing to zoom into.
fn zoom(query: &GroundTruth, client: &dyn PolicyClient, planner: &ZoomPlanner, spans: &IntervalSet) -> Result<(Option<ZoomPlan>, Option<String>)> {
    let spans = spans.clamp(0.0, query.duration);
    if spans.is_empty() {
        return Ok((None, None));
    }
    let plan = planner.fine(&spans)?;
    let reply = client.query(&request(query, "fine", &plan, &spans))?;
    let answer = response::extract_lenient(&reply.text, &query.option_letters()).answer_letter;
    Ok((Some(plan), answer))
}

/// Whole-video coarse pass, then a fine pass over the predicted spans. When
/// the coarse pass grounds nothing its answer stands.
pub fn coarse_to_fine(query: &GroundTruth, client: &dyn PolicyClient, planner: &ZoomPlanner) -> Result<ZoomOutcome> {
    let coarse_plan = planner.coarse(query.duration)?;
    let whole = IntervalSet::single(0.0, query.duration)?;
    let reply = client.query(&request(query, "coarse", &coarse_plan, &whole))?;
    let coarse = response::parse_or_extract(&reply.text, &query.option_letters());
    let spans = coarse.glue_spans.clamp(0.0, query.duration);
    let (fine_plan, fine_answer) = zoom(query, client, planner, &spans)?;
    Ok(ZoomOutcome {
        final_answer: fine_answer.or_else(|| coarse.answer_letter.clone()),
        coarse_answer: coarse.answer_letter,
        spans,
        coarse_plan,
        fine_plan,
        windows: Vec::new(),
    })
}

/// Coarse pass per window, keep the spans of the `top_k` most confident
/// windows, then one fine pass over their union. Confidence is the
/// probability of the answer token reported by the client (0 if absent).
pub fn divide_and_conquer(
    query: &GroundTruth,
    client: &dyn PolicyClient,
    planner: &ZoomPlanner,
    window_frames: u32,
    top_k: usize,
) -> Result<ZoomOutcome> {
    let windows = planner::divide_windows(query.duration, window_frames, &planner.budget)?;
    if windows.is_empty() {
        return Err(Error::domain("video too short to window"));
    }
    let letters = query.option_letters();
    let mut results = Vec::with_capacity(windows.len());
    let mut first_plan = None;
    for (k, window) in windows.iter().enumerate() {
        let spans = IntervalSet::single(window.start, window.end)?;
        let mut plan = planner.coarse(window.measure())?;
        plan.frame_times.iter_mut().for_each(|t| *t += window.start);
        let reply = client.query(&request(query, &format!("window{k}"), &plan, &spans))?;
        let parsed = response::parse_or_extract(&reply.text, &letters);
        let confidence = reply.answer_token_logprob.map_or(0.0, |lp| lp.exp().clamp(0.0, 1.0));
        results.push(WindowResult::new(
            *window,
            parsed.glue_spans,
            parsed.answer_letter.unwrap_or_default(),
            confidence,
        )?);
        first_plan.get_or_insert(plan);
    }
    let spans = planner::aggregate_top_spans(&results, top_k)?;
    let (fine_plan, fine_answer) = zoom(query, client, planner, &spans)?;
    let best = results
        .iter()
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence).then(b.window.start.total_cmp(&a.window.start)))
        .map(|r| r.answer.clone())
        .filter(|a| !a.is_empty());
    Ok(ZoomOutcome {
        final_answer: fine_answer.or_else(|| best.clone()),
        coarse_answer: best,
        spans,
        coarse_plan: first_plan.expect("at least one window"),
        fine_plan,
        windows: results,
    })
}
