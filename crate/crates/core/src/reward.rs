//! Verifiable reward functions: answer rewards over the three generated
//! outputs, the two length rewards, the binary format reward, and their
//! weighted combination into the final training reward.
//!
//! All functions here are pure; identical inputs give bit-identical
//! outputs, so rollout groups can be scored concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError};
use crate::response::ParsedResponse;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

/// Hyperparameters of the reward model.
///
/// `tau` controls the steepness of the rationale length reward, `gamma`
/// the skewness of the evidence length reward, `omega` the full-credit
/// compression threshold, and the `alpha_*` weights mix the three reward
/// families. `eps_std` is the advantage std clip floor, recorded here
/// because it is tuned alongside the reward weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub tau: f64,
    pub gamma: f64,
    pub omega: f64,
    pub alpha_ans: f64,
    pub alpha_len: f64,
    pub alpha_fmt: f64,
    pub eps_std: f64,
}

impl RewardConfig {
    /// Tuning grid for `tau`.
    pub const TAU_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];
    /// Tuning grid for `gamma`.
    pub const GAMMA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.8, 1.0];

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.tau <= 0.0 {
            return Err(RewardError::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if self.gamma < 0.0 {
            return Err(RewardError::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(RewardError::InvalidConfig(format!(
                "omega must be in [0,1], got {}",
                self.omega
            )));
        }
        for (name, v) in [
            ("alpha_ans", self.alpha_ans),
            ("alpha_len", self.alpha_len),
            ("alpha_fmt", self.alpha_fmt),
            ("eps_std", self.eps_std),
        ] {
            if v < 0.0 {
                return Err(RewardError::InvalidConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            gamma: 0.5,
            omega: 0.9,
            alpha_ans: 0.8,
            alpha_len: 0.1,
            alpha_fmt: 0.1,
            eps_std: 0.1,
        }
    }
}

/// Per-response reward decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub ans_r: f64,
    pub ans_e: f64,
    pub ans_f: f64,
    pub ans_mean: f64,
    pub len_r: f64,
    pub len_e: f64,
    pub len_mean: f64,
    pub fmt: f64,
    pub final_reward: f64,
}

impl RewardBreakdown {
    /// Malformed responses are flagged invalid for training regardless of
    /// their other sub-rewards.
    pub fn valid_for_training(&self) -> bool {
        self.fmt > 0.5
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Answer rewards: unigram F1 of each of the three outputs against the
/// golds, plus their arithmetic mean. Missing outputs are passed as empty
/// strings and score 0 (unless every gold normalizes to nothing).
pub fn answer_rewards(
    golds: &[String],
    o_r: &str,
    o_e: &str,
    o_f: &str,
) -> Result<(f64, f64, f64, f64), RewardError> {
    let ans_r = metrics::unigram_f1(o_r, golds)?;
    let ans_e = metrics::unigram_f1(o_e, golds)?;
    let ans_f = metrics::unigram_f1(o_f, golds)?;
    Ok((ans_r, ans_e, ans_f, (ans_r + ans_e + ans_f) / 3.0))
}

/// Rationale length reward: rewards rationales that are long relative to
/// the evidence.
///
/// Degenerate lengths take the continuous limits of the two branches:
/// zero rationale with non-empty evidence scores 0, non-empty rationale
/// with zero evidence scores 1, and both zero scores 0.5.
pub fn rationale_length_reward(len_r: usize, len_e: usize, tau: f64) -> f64 {
    debug_assert!(tau > 0.0);
    match (len_r, len_e) {
        (0, 0) => 0.5,
        (0, _) => 0.0,
        (_, 0) => 1.0,
        (r, e) => {
            let (r, e) = (r as f64, e as f64);
            if r >= e {
                sigmoid((r / e - 1.0) / tau)
            } else {
                sigmoid((1.0 - e / r) / tau)
            }
        }
    }
}

/// Evidence length reward: full credit once the evidence compresses the
/// passages past `omega`, a skewed partial credit below, and 0 when the
/// evidence is no shorter than the passages.
pub fn evidence_length_reward(
    len_e: usize,
    len_p: usize,
    gamma: f64,
    omega: f64,
) -> Result<f64, RewardError> {
    if len_p == 0 {
        return Err(RewardError::InvalidConfig("len_p must be > 0".to_string()));
    }
    let x = 1.0 - len_e as f64 / len_p as f64;
    if x < 0.0 {
        return Ok(0.0);
    }
    if x >= omega {
        return Ok(1.0);
    }
    Ok(x.powf(gamma))
}

/// Format reward: 1.0 iff the raw response passes the format predicate.
pub fn format_reward(raw: &str) -> f64 {
    if crate::response::check_format(raw) {
        1.0
    } else {
        0.0
    }
}

/// Weighted final reward from already-averaged sub-rewards.
pub fn final_reward(ans_mean: f64, len_mean: f64, fmt: f64, cfg: &RewardConfig) -> f64 {
    cfg.alpha_ans * ans_mean + cfg.alpha_len * len_mean + cfg.alpha_fmt * fmt
}

/// Score one parsed response end to end.
///
/// `o_r` and `o_e` are the regenerated outputs from the masked contexts
/// (empty when the required segment was missing); the in-line answer of
/// the response serves as `o_f`. `len_p` is the total passage word count.
pub fn score_response(
    golds: &[String],
    parsed: &ParsedResponse,
    o_r: &str,
    o_e: &str,
    len_p: usize,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let o_f = parsed.answer_text();
    let (ans_r, ans_e, ans_f, ans_mean) = answer_rewards(golds, o_r, o_e, o_f)?;

    let words_r = metrics::word_count(parsed.rationale_text());
    let words_e = metrics::word_count(parsed.evidence_text());
    let len_r = rationale_length_reward(words_r, words_e, cfg.tau);
    let len_e = evidence_length_reward(words_e, len_p, cfg.gamma, cfg.omega)?;
    let len_mean = (len_r + len_e) / 2.0;

    let fmt = format_reward(&parsed.raw);
    let final_r = final_reward(ans_mean, len_mean, fmt, cfg);

    Ok(RewardBreakdown {
        ans_r,
        ans_e,
        ans_f,
        ans_mean,
        len_r,
        len_e,
        len_mean,
        fmt,
        final_reward: final_r,
    })
}
