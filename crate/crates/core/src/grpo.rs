//! Group-relative policy optimization: std-clipped group advantages, the
//! clipped surrogate objective, and the KL penalty against a reference
//! policy.
//!
//! The objective is evaluated at sequence granularity: token surrogates
//! are averaged within each response, then across the group. Alongside the
//! scalar objective, [`grpo_objective`] returns the derivative of the
//! objective with respect to each current-policy token log-probability, so
//! any backend can chain it through its own parameterization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::ParsedResponse;

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("group must contain at least 2 responses, got {0}")]
    SingletonGroup(usize),
    #[error("zero-variance rewards with eps_std = 0 make advantages undefined")]
    DegenerateGroup,
    #[error("non-finite log-probability encountered")]
    NonFiniteLogProb,
    #[error("advantages not populated; call group_advantages first")]
    UnpopulatedAdvantages,
    #[error("response {index}: token array lengths differ ({detail})")]
    TokenLengthMismatch { index: usize, detail: String },
    #[error("invalid grpo config: {0}")]
    InvalidConfig(String),
}

/// GRPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// PPO clip width (epsilon).
    pub clip_eps: f64,
    /// KL penalty weight (beta).
    pub kl_beta: f64,
    /// Advantage std clip floor (epsilon_std).
    pub eps_std: f64,
    /// Responses sampled per instance (G).
    pub group_size: usize,
    /// Optimization epochs per sampled batch; 1 keeps training on-policy.
    pub inner_epochs: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_beta: 1e-2,
            eps_std: 0.1,
            group_size: 8,
            inner_epochs: 1,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(GrpoError::InvalidConfig(format!(
                "clip_eps must be in (0,1), got {}",
                self.clip_eps
            )));
        }
        if self.kl_beta < 0.0 || self.eps_std < 0.0 {
            return Err(GrpoError::InvalidConfig(
                "kl_beta and eps_std must be >= 0".to_string(),
            ));
        }
        if self.group_size < 2 {
            return Err(GrpoError::InvalidConfig(format!(
                "group_size must be >= 2, got {}",
                self.group_size
            )));
        }
        if self.inner_epochs == 0 {
            return Err(GrpoError::InvalidConfig(
                "inner_epochs must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One scored response: the self-contained token sequence with its
/// log-probabilities under the current, sampling-time, and reference
/// policies.
#[derive(Debug, Clone)]
pub struct ScoredResponse {
    pub parsed: ParsedResponse,
    pub token_ids: Vec<u32>,
    pub logp_current: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
}

impl ScoredResponse {
    fn check_lengths(&self, index: usize) -> Result<(), GrpoError> {
        let n = self.token_ids.len();
        if self.logp_current.len() != n || self.logp_old.len() != n || self.logp_ref.len() != n {
            return Err(GrpoError::TokenLengthMismatch {
                index,
                detail: format!(
                    "tokens {n}, current {}, old {}, ref {}",
                    self.logp_current.len(),
                    self.logp_old.len(),
                    self.logp_ref.len()
                ),
            });
        }
        Ok(())
    }
}

/// G responses for one instance with rewards and, once computed, their
/// group-relative advantages.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub instance_id: String,
    pub responses: Vec<ScoredResponse>,
    pub rewards: Vec<f64>,
    pub advantages: Option<Vec<f64>>,
}

impl RolloutGroup {
    pub fn size(&self) -> usize {
        self.responses.len()
    }

    /// Populate advantages in place.
    pub fn populate_advantages(&mut self, eps_std: f64) -> Result<(), GrpoError> {
        self.advantages = Some(group_advantages(&self.rewards, eps_std)?);
        Ok(())
    }
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group-relative advantages with the std clipped to at least `eps_std`.
///
/// Uses the population standard deviation, so the two-response group
/// {0.49, 0.51} normalizes to exactly {-1, +1} when unclipped.
pub fn group_advantages(rewards: &[f64], eps_std: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::SingletonGroup(rewards.len()));
    }
    let (mean, std) = mean_std(rewards);
    let denom = std.max(eps_std);
    if denom == 0.0 {
        return Err(GrpoError::DegenerateGroup);
    }
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Importance ratio between current and sampling-time policies, computed
/// in log space.
pub fn token_ratio(logp_current: f64, logp_old: f64) -> Result<f64, GrpoError> {
    if !logp_current.is_finite() || !logp_old.is_finite() {
        return Err(GrpoError::NonFiniteLogProb);
    }
    Ok((logp_current - logp_old).exp())
}

/// PPO clipped surrogate: `min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Per-token KL penalty against the reference policy: the non-negative
/// estimator `r - ln r - 1` with `r = exp(logp_ref - logp_current)`.
pub fn kl_penalty(logp_current: f64, logp_ref: f64) -> Result<f64, GrpoError> {
    if !logp_current.is_finite() || !logp_ref.is_finite() {
        return Err(GrpoError::NonFiniteLogProb);
    }
    let log_r = logp_ref - logp_current;
    Ok(log_r.exp() - log_r - 1.0)
}

/// The objective value with its gradient contract and diagnostics.
#[derive(Debug, Clone)]
pub struct GrpoObjective {
    /// Scalar objective J; ascent on J is the training update.
    pub value: f64,
    /// dJ / d logp_current, per response, per token. Chaining these through
    /// the policy parameterization yields the parameter gradient.
    pub dlogp_current: Vec<Vec<f64>>,
    /// Fraction of tokens whose importance ratio left the clip interval.
    pub clip_fraction: f64,
    /// Mean per-token KL estimate over the group.
    pub mean_kl: f64,
}

/// Evaluate the GRPO objective for one populated rollout group.
pub fn grpo_objective(group: &RolloutGroup, cfg: &GrpoConfig) -> Result<GrpoObjective, GrpoError> {
    let advantages = group
        .advantages
        .as_ref()
        .ok_or(GrpoError::UnpopulatedAdvantages)?;
    let grp = group.responses.len();
    if grp < 2 {
        return Err(GrpoError::SingletonGroup(grp));
    }

    let mut value = 0.0;
    let mut dlogp_current = Vec::with_capacity(grp);
    let mut clipped_tokens = 0usize;
    let mut total_tokens = 0usize;
    let mut kl_sum = 0.0;

    for (i, resp) in group.responses.iter().enumerate() {
        resp.check_lengths(i)?;
        let advantage = advantages[i];
        let t = resp.token_ids.len();
        let mut grad = vec![0.0; t];
        if t == 0 {
            dlogp_current.push(grad);
            continue;
        }
        let inv_t = 1.0 / t as f64;
        let mut surrogate_mean = 0.0;
        let mut kl_mean = 0.0;
        for (k, g) in grad.iter_mut().enumerate() {
            let ratio = token_ratio(resp.logp_current[k], resp.logp_old[k])?;
            let unclipped = ratio * advantage;
            let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantage;
            surrogate_mean += unclipped.min(clipped) * inv_t;
            if ratio < 1.0 - cfg.clip_eps || ratio > 1.0 + cfg.clip_eps {
                clipped_tokens += 1;
            }

            let kl = kl_penalty(resp.logp_current[k], resp.logp_ref[k])?;
            kl_mean += kl * inv_t;

            // d surrogate / d logp: flows through the unclipped branch only
            let mut d = 0.0;
            if unclipped <= clipped {
                d += ratio * advantage;
            }
            // d (-beta * kl) / d logp = beta * (r - 1)
            let r_ref = (resp.logp_ref[k] - resp.logp_current[k]).exp();
            d += cfg.kl_beta * (r_ref - 1.0);
            *g = d * inv_t / grp as f64;
        }
        value += (surrogate_mean - cfg.kl_beta * kl_mean) / grp as f64;
        kl_sum += kl_mean / grp as f64;
        total_tokens += t;
        dlogp_current.push(grad);
    }

    Ok(GrpoObjective {
        value,
        dlogp_current,
        clip_fraction: if total_tokens == 0 {
            0.0
        } else {
            clipped_tokens as f64 / total_tokens as f64
        },
        mean_kl: kl_sum,
    })
}
