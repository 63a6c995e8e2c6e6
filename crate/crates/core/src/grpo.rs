//! GRPO surrogate objective with per-token advantages and a KL penalty
//! toward a frozen reference policy, plus its analytic gradient.
//!
//! ```text
//! J(θ) = mean_groups (1/G) Σ_i (1/|o_i|) Σ_t [ ρ_it · A_it − β · KL_it ]
//! ρ_it = π_θ(o_it | ctx) / π_old(o_it | ctx)
//! ```
//!
//! `KL_it` is either the k3 estimator `r − ln r − 1` with
//! `r = π_ref(o_it) / π_θ(o_it)`, or the exact categorical KL of the full
//! next-token distributions at that position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::ToyPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KlEstimator {
    Exact,
    #[default]
    K3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub beta: f64,
    pub kl: KlEstimator,
    /// PPO-style ratio clip range; `None` evaluates the plain surrogate.
    pub clip: Option<f64>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { beta: 0.04, kl: KlEstimator::K3, clip: None }
    }
}

/// One sampled response with its per-token advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub prompt: usize,
    pub tokens: Vec<usize>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveParts {
    pub objective: f64,
    /// Mean per-token surrogate term (ratio times advantage).
    pub surrogate: f64,
    /// Mean per-token KL estimate.
    pub kl: f64,
}

fn check_inputs(policy: &ToyPolicy, old: &ToyPolicy, reference: &ToyPolicy, groups: &[Vec<ScoredSample>]) -> Result<()> {
    if !policy.same_shape(old) || !policy.same_shape(reference) {
        return Err(Error::domain("policy, old policy and reference policy differ in shape"));
    }
    if groups.is_empty() || groups.iter().any(Vec::is_empty) {
        return Err(Error::domain("objective needs at least one non-empty group"));
    }
    for s in groups.iter().flatten() {
        if s.advantages.len() != s.tokens.len() {
            return Err(Error::domain(format!(
                "{} advantages for {} tokens",
                s.advantages.len(),
                s.tokens.len()
            )));
        }
    }
    Ok(())
}

/// Evaluates the objective and, when `grad` is given, accumulates its
/// gradient with respect to `policy.params` into it.
pub fn evaluate(
    policy: &ToyPolicy,
    old: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[Vec<ScoredSample>],
    cfg: &ObjectiveConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<ObjectiveParts> {
    check_inputs(policy, old, reference, groups)?;
    if let Some(g) = grad.as_deref_mut() {
        if g.len() != policy.n_params() {
            return Err(Error::domain("gradient buffer has the wrong length"));
        }
    }
    let v = policy.vocab_size();
    let (mut lp, mut lp_old, mut lp_ref) = (Vec::with_capacity(v), Vec::with_capacity(v), Vec::with_capacity(v));
    let mut parts = ObjectiveParts::default();
    let mut token_count = 0usize;
    let n_groups = groups.len() as f64;

    for group in groups {
        let g_size = group.len() as f64;
        for sample in group {
            let len = sample.tokens.len();
            if len == 0 {
                continue;
            }
            let prompt = sample.prompt;
            if prompt >= policy.n_prompts() || sample.tokens.iter().any(|&t| t >= v) {
                return Err(Error::domain("sample outside the policy's prompt or vocabulary range"));
            }
            let w = 1.0 / (n_groups * g_size * len as f64);
            for t in 0..len {
                let ctx = policy.context_id(prompt, &sample.tokens, t);
                let tok = sample.tokens[t];
                policy.log_softmax(ctx, &mut lp);
                old.log_softmax(ctx, &mut lp_old);
                reference.log_softmax(ctx, &mut lp_ref);

                let adv = sample.advantages[t];
                let ratio = (lp[tok] - lp_old[tok]).exp();
                let (surrogate, surrogate_active) = match cfg.clip {
                    None => (ratio * adv, true),
                    Some(eps) => {
                        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
                        let plain = ratio * adv;
                        if plain <= clipped {
                            (plain, true)
                        } else {
                            (clipped, false)
                        }
                    }
                };
                let (kl, r) = match cfg.kl {
                    KlEstimator::K3 => {
                        let r = (lp_ref[tok] - lp[tok]).exp();
                        (r - (lp_ref[tok] - lp[tok]) - 1.0, r)
                    }
                    KlEstimator::Exact => {
                        let kl = lp.iter().zip(&lp_ref).map(|(a, b)| a.exp() * (a - b)).sum::<f64>();
                        (kl, 0.0)
                    }
                };
                parts.objective += w * (surrogate - cfg.beta * kl);
                parts.surrogate += surrogate;
                parts.kl += kl;
                token_count += 1;

                let Some(g) = grad.as_deref_mut() else { continue };
                let row = &mut g[ctx * v..(ctx + 1) * v];
                // Coefficient on d log π(tok) / dz = onehot(tok) − p.
                let mut coef = if surrogate_active { ratio * adv } else { 0.0 };
                if cfg.kl == KlEstimator::K3 {
                    coef -= cfg.beta * (1.0 - r);
                }
                let coef = w * coef;
                for (j, gj) in row.iter_mut().enumerate() {
                    let p = lp[j].exp();
                    let onehot = if j == tok { 1.0 } else { 0.0 };
                    *gj += coef * (onehot - p);
                    if cfg.kl == KlEstimator::Exact {
                        *gj -= w * cfg.beta * p * (lp[j] - lp_ref[j] - kl);
                    }
                }
            }
        }
    }
    if token_count > 0 {
        parts.surrogate /= token_count as f64;
        parts.kl /= token_count as f64;
    }
    Ok(parts)
}

pub fn grpo_objective(
    policy: &ToyPolicy,
    old: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[Vec<ScoredSample>],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    evaluate(policy, old, reference, groups, cfg, None).map(|p| p.objective)
}

/// Gradient of [`grpo_objective`] with respect to `policy.params`; the old
/// and reference policies are constants.
pub fn grpo_gradient(
    policy: &ToyPolicy,
    old: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[Vec<ScoredSample>],
    cfg: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.n_params()];
    evaluate(policy, old, reference, groups, cfg, Some(&mut grad))?;
    Ok(grad)
}
