use clap::ValueEnum;
use gvqa_core::advantage::AdvantageMode;
use gvqa_core::planner::{BudgetConfig, ZoomPlanner, DEFAULT_FINE_FPS};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    #[serde(alias = "token_adv")]
    Tokenadv,
    #[serde(alias = "summed")]
    #[value(alias = "summed")]
    Sum,
}

impl From<ModeArg> for AdvantageMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tokenadv => AdvantageMode::TokenAdv,
            ModeArg::Sum => AdvantageMode::Summed,
        }
    }
}

/// Budget settings shared by every command that plans a pass.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BudgetSettings {
    pub budget: u32,
    pub vmin: u32,
    pub vmax: u32,
    pub fps: f64,
    pub fine_fps: f64,
}

impl BudgetSettings {
    pub fn resolve(budget: Option<u32>, vmin: Option<u32>, vmax: Option<u32>, fps: Option<f64>, fine_fps: Option<f64>) -> Self {
        let d = BudgetConfig::default();
        Self {
            budget: budget.unwrap_or(d.total_tokens),
            vmin: vmin.unwrap_or(d.min_tokens_per_frame),
            vmax: vmax.unwrap_or(d.max_tokens_per_frame),
            fps: fps.unwrap_or(d.fps),
            fine_fps: fine_fps.unwrap_or(DEFAULT_FINE_FPS),
        }
    }

    pub fn planner(&self) -> CliResult<ZoomPlanner> {
        let budget = BudgetConfig {
            total_tokens: self.budget,
            min_tokens_per_frame: self.vmin,
            max_tokens_per_frame: self.vmax,
            fps: self.fps,
        };
        Ok(ZoomPlanner::new(budget, self.fine_fps)?)
    }
}
