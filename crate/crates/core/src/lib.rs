//! Reward, credit-assignment, optimization, budgeting and evaluation
//! machinery for grounded video question answering with a coarse-to-fine
//! temporal zoom.
//!
//! * [`interval`]: exact interval-set algebra and IoU/IoG/IoP.
//! * [`response`]: the `<think>/<answer>/<glue>` grammar and glue token masks.
//! * [`reward`]: format, accuracy, IoU and zoom-in rewards.
//! * [`advantage`]: group-normalized advantages, summed or routed per token.
//! * [`policy`], [`grpo`], [`train`]: a toy tabular policy, the GRPO
//!   objective and gradient, and a training loop over a synthetic task.
//! * [`planner`], [`inference`]: token budgets, window schedules and the
//!   coarse-to-fine inference drivers.
//! * [`metrics`], [`filter`]: evaluation metrics and training-data filtering.
//! * [`sim`]: the deterministic synthetic environment and scripted client.

pub mod advantage;
pub mod client;
pub mod error;
pub mod filter;
pub mod grpo;
pub mod inference;
pub mod interval;
pub mod metrics;
pub mod planner;
pub mod policy;
pub mod response;
pub mod reward;
pub mod sim;
pub mod train;

pub use error::{ClientError, Error, FormatError, Result};

/// Version tag carried by every line-delimited JSON record.
pub const SCHEMA: &str = "zz/1";
