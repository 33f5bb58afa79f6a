//! The generation abstraction: sampling with token log-probabilities plus
//! teacher-forced scoring, implemented by the analytic toy policy and the
//! remote inference-server client.

mod http;
mod toy;

pub use http::{HttpBackendConfig, InferenceClient};
pub use toy::{
    canonical_actions, toy_instances, toy_noise_pool, toy_vocab, ParamGradient, ToyContext,
    ToyPolicy, TOY_PASSAGES,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend replied with status {status}: {message}")]
    Remote { status: u16, message: String },
    #[error("malformed backend reply: {0}")]
    MalformedReply(String),
    #[error("backend does not support teacher-forced scoring")]
    ScoringUnsupported,
    #[error("completion not tokenizable by this backend: {0}")]
    MalformedCompletion(String),
}

/// Which policy snapshot a scoring call refers to. Backends serving a
/// single model treat every view as the live policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyView {
    Current,
    Old,
    Reference,
}

/// A sampling request against a prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub num_samples: usize,
    /// 0 selects deterministic (greedy) decoding.
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub stop_sequences: Vec<String>,
    pub return_logprobs: bool,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            num_samples: 1,
            temperature: 1.0,
            max_new_tokens: 768,
            stop_sequences: Vec::new(),
            return_logprobs: true,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.num_samples == 0 {
            return Err(BackendError::InvalidRequest(
                "num_samples must be >= 1".to_string(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
}

/// One decoded continuation. Token log-probabilities are reported under
/// the (untempered) sampling policy, so their sum is the sequence
/// log-probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub token_ids: Vec<u32>,
    pub token_logprobs: Vec<f64>,
    pub finish_reason: FinishReason,
}

/// A backend that can sample continuations and score given completions
/// token by token. Implementations must be safe for concurrent calls.
pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>, BackendError>;

    /// Teacher-forced per-token log-probabilities of `completion` given
    /// `prompt`, under the live policy.
    fn score(&self, prompt: &str, completion: &str) -> Result<Vec<f64>, BackendError>;

    /// Score under a specific policy snapshot. Backends without snapshot
    /// support score under their only policy.
    fn score_under(
        &self,
        _view: PolicyView,
        prompt: &str,
        completion: &str,
    ) -> Result<Vec<f64>, BackendError> {
        self.score(prompt, completion)
    }
}
