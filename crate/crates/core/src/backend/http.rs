//! Blocking HTTP client for a remote inference server.
//!
//! Wire format: POST `{prompt, n, temperature, max_tokens, stop[],
//! logprobs}` to the configured endpoint; the reply carries
//! `{choices[]: {text, tokens[], token_logprobs[], finish_reason}}`.
//! The auth token is read from an environment variable named in the
//! config. In-flight requests are bounded by a counting semaphore so
//! concurrent rollout workers cannot overload the server.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, FinishReason, GenerationBackend, GenerationRequest, GenerationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token; unset or
    /// empty means unauthenticated.
    pub auth_token_env: String,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/generate".to_string(),
            auth_token_env: "INFERENCE_API_TOKEN".to_string(),
            max_in_flight: 4,
            timeout_secs: 120,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: usize,
    stop: &'a [String],
    logprobs: bool,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    tokens: Vec<u32>,
    #[serde(default)]
    token_logprobs: Vec<f64>,
    finish_reason: String,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut n = self.permits.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.sem.permits.lock().expect("semaphore poisoned");
        *n += 1;
        self.sem.cv.notify_one();
    }
}

pub struct InferenceClient {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
    in_flight: Semaphore,
}

impl InferenceClient {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let auth_token = if config.auth_token_env.is_empty() {
            None
        } else {
            std::env::var(&config.auth_token_env)
                .ok()
                .filter(|t| !t.is_empty())
        };
        let in_flight = Semaphore::new(config.max_in_flight);
        Ok(Self {
            config,
            client,
            auth_token,
            in_flight,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    fn parse_finish_reason(raw: &str) -> Result<FinishReason, BackendError> {
        match raw {
            "stop" => Ok(FinishReason::Stop),
            "length" => Ok(FinishReason::Length),
            other => Err(BackendError::MalformedReply(format!(
                "unknown finish_reason {other:?}"
            ))),
        }
    }
}

impl GenerationBackend for InferenceClient {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>, BackendError> {
        request.validate()?;
        let _permit = self.in_flight.acquire();
        let body = WireRequest {
            prompt: &request.prompt,
            n: request.num_samples,
            temperature: request.temperature,
            max_tokens: request.max_new_tokens,
            stop: &request.stop_sequences,
            logprobs: request.return_logprobs,
        };
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(BackendError::Remote {
                status: status.as_u16(),
                message,
            });
        }
        let reply: WireReply = resp
            .json()
            .map_err(|e| BackendError::MalformedReply(e.to_string()))?;
        if reply.choices.len() != request.num_samples {
            return Err(BackendError::MalformedReply(format!(
                "requested {} samples, got {}",
                request.num_samples,
                reply.choices.len()
            )));
        }
        reply
            .choices
            .into_iter()
            .map(|c| {
                if request.return_logprobs && c.token_logprobs.len() != c.tokens.len() {
                    return Err(BackendError::MalformedReply(format!(
                        "{} tokens but {} logprobs",
                        c.tokens.len(),
                        c.token_logprobs.len()
                    )));
                }
                Ok(GenerationResult {
                    text: c.text,
                    token_ids: c.tokens,
                    token_logprobs: c.token_logprobs,
                    finish_reason: Self::parse_finish_reason(&c.finish_reason)?,
                })
            })
            .collect()
    }

    /// The wire protocol has no teacher-forced scoring call.
    fn score(&self, _prompt: &str, _completion: &str) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::ScoringUnsupported)
    }
}
