//! Group-relative advantages.
//!
//! Two modes are supported:
//!
//! * `Summed`: the four rewards are added per rollout, normalized across the
//!   group, and the result is broadcast to every token.
//! * `TokenAdv`: each reward kind is normalized across the group on its own;
//!   glue tokens then receive the mean of the format, zoom and IoU advantages
//!   while every other token receives the mean of the format, zoom and
//!   accuracy advantages.
//!
//! Normalization uses the population standard deviation (divide by `G`).
//! A reward kind whose spread is below `eps` gets all-zero advantages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response::TokenSpanMap;
use crate::reward::{RewardKind, RewardVector};

pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageMode {
    #[default]
    #[serde(alias = "token_adv")]
    TokenAdv,
    #[serde(alias = "sum")]
    Summed,
}

/// `(x - mean) / std` over the group, population std.
pub fn group_normalize(values: &[f64], eps: f64) -> Result<Vec<f64>> {
    let g = values.len();
    if g < 2 {
        return Err(Error::domain(format!("group statistics need at least 2 rollouts, got {g}")));
    }
    let n = g as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std < eps {
        return Ok(vec![0.0; g]);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub mode: AdvantageMode,
    pub format: Vec<f64>,
    pub acc: Vec<f64>,
    pub iou: Vec<f64>,
    pub zoom: Vec<f64>,
    /// Normalized summed reward, used in `Summed` mode.
    pub summed: Vec<f64>,
}

impl GroupAdvantages {
    pub fn get(&self, kind: RewardKind) -> &[f64] {
        match kind {
            RewardKind::Format => &self.format,
            RewardKind::Acc => &self.acc,
            RewardKind::Iou => &self.iou,
            RewardKind::Zoom => &self.zoom,
        }
    }

    pub fn group_size(&self) -> usize {
        self.summed.len()
    }

    /// Advantage for glue tokens of rollout `i`.
    pub fn glue_level(&self, i: usize) -> f64 {
        match self.mode {
            AdvantageMode::TokenAdv => (self.format[i] + self.zoom[i] + self.iou[i]) / 3.0,
            AdvantageMode::Summed => self.summed[i],
        }
    }

    /// Advantage for every non-glue token of rollout `i`.
    pub fn other_level(&self, i: usize) -> f64 {
        match self.mode {
            AdvantageMode::TokenAdv => (self.format[i] + self.zoom[i] + self.acc[i]) / 3.0,
            AdvantageMode::Summed => self.summed[i],
        }
    }
}

/// Normalizes every reward kind separately, plus the summed reward.
pub fn normalize_per_reward(rewards: &[RewardVector], mode: AdvantageMode, eps: f64) -> Result<GroupAdvantages> {
    let column = |kind: RewardKind| -> Result<Vec<f64>> {
        let v: Vec<f64> = rewards.iter().map(|r| r.get(kind)).collect();
        group_normalize(&v, eps)
    };
    let sums: Vec<f64> = rewards.iter().map(RewardVector::sum).collect();
    Ok(GroupAdvantages {
        mode,
        format: column(RewardKind::Format)?,
        acc: column(RewardKind::Acc)?,
        iou: column(RewardKind::Iou)?,
        zoom: column(RewardKind::Zoom)?,
        summed: group_normalize(&sums, eps)?,
    })
}

/// Group-normalized summed reward, one scalar per rollout.
pub fn summed_advantage(rewards: &[RewardVector], eps: f64) -> Result<Vec<f64>> {
    let sums: Vec<f64> = rewards.iter().map(RewardVector::sum).collect();
    group_normalize(&sums, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenAdvantages {
    pub values: Vec<f64>,
}

impl TokenAdvantages {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-token advantages for rollout `rollout` of the group.
pub fn token_advantages(ga: &GroupAdvantages, mask: &TokenSpanMap, rollout: usize) -> Result<TokenAdvantages> {
    if rollout >= ga.group_size() {
        return Err(Error::domain(format!("rollout {rollout} outside group of {}", ga.group_size())));
    }
    if mask.flags().len() != mask.total_len {
        return Err(Error::domain("token mask length disagrees with its token count"));
    }
    let (glue, other) = (ga.glue_level(rollout), ga.other_level(rollout));
    let values = mask.flags().iter().map(|g| if *g { glue } else { other }).collect();
    Ok(TokenAdvantages { values })
}
