//! Offline training-data selection from grouped rollout statistics.
//!
//! An example is kept when its rollouts disagree enough on grounding
//! (`δ = max IoU − mean IoU ≥ threshold`) and not every rollout answered
//! correctly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_THRESHOLD: f64 = 0.1;

/// `max(ious) − mean(ious)`, computed as the mean gap to the maximum so it
/// is exactly zero iff all values are equal.
pub fn delta(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::domain("delta needs at least one IoU"));
    }
    if ious.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("IoU values must be finite"));
    }
    let max = ious.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ious.iter().map(|x| max - x).sum::<f64>() / ious.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub id: String,
    pub ious: Vec<f64>,
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub id: String,
    pub delta: f64,
    pub all_correct: bool,
    pub kept: bool,
}

pub fn decide(id: &str, delta: f64, all_correct: bool, threshold: f64) -> FilterDecision {
    FilterDecision { id: id.to_string(), delta, all_correct, kept: !all_correct && delta >= threshold }
}

/// One decision per record, in input order.
pub fn filter_examples(records: &[RolloutStats], threshold: f64) -> Result<Vec<FilterDecision>> {
    records
        .iter()
        .map(|r| {
            let all_correct = !r.correct.is_empty() && r.correct.iter().all(|c| *c);
            Ok(decide(&r.id, delta(&r.ious)?, all_correct, threshold))
        })
        .collect()
}

/// The records whose decision is `kept`.
pub fn kept_records<'a>(records: &'a [RolloutStats], decisions: &[FilterDecision]) -> Vec<&'a RolloutStats> {
    records.iter().zip(decisions).filter(|(_, d)| d.kept).map(|(r, _)| r).collect()
}
