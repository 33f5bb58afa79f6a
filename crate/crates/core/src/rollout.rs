//! Rollout collection: sample a group of responses for one instance,
//! regenerate the masked outputs, score rewards, and populate advantages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend, GenerationRequest, PolicyView};
use crate::corpus::{CorpusError, QAInstance, TemplateSet};
use crate::grpo::{GrpoConfig, GrpoError, RolloutGroup, ScoredResponse};
use crate::masking::{build_context, ContextMode, MaskingError};
use crate::metrics::passages_word_count;
use crate::response::parse_response;
use crate::reward::{score_response, RewardBreakdown, RewardConfig, RewardError};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

/// Decoding parameters for rollouts and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    /// Sampling temperature for rollout groups.
    pub temperature: f64,
    pub max_new_tokens: usize,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_new_tokens: 768,
        }
    }
}

/// The masked regenerations for one response.
#[derive(Debug, Clone, Default)]
pub struct RegeneratedOutputs {
    pub o_r: String,
    pub o_e: String,
}

/// One collected group: scored responses, their reward breakdowns, and the
/// regenerated outputs the rewards were computed from.
#[derive(Debug)]
pub struct CollectedGroup {
    /// The extraction conversation prefix all responses were sampled from.
    pub prompt: String,
    pub group: RolloutGroup,
    pub breakdowns: Vec<RewardBreakdown>,
    pub regenerated: Vec<RegeneratedOutputs>,
}

fn greedy_completion(
    backend: &dyn GenerationBackend,
    prompt: String,
    max_new_tokens: usize,
) -> Result<String, BackendError> {
    let request = GenerationRequest {
        prompt,
        num_samples: 1,
        temperature: 0.0,
        max_new_tokens,
        stop_sequences: Vec::new(),
        return_logprobs: false,
    };
    Ok(backend.generate(&request)?.remove(0).text)
}

/// Sample `grpo.group_size` responses for `instance`, regenerate the
/// rationale-only and evidence-only outputs at temperature 0, score every
/// response, and populate group advantages.
///
/// Any backend failure aborts the whole group so a partially scored group
/// is never trained on.
pub fn collect_rollout_group(
    instance: &QAInstance,
    backend: &dyn GenerationBackend,
    templates: &TemplateSet,
    decoding: &DecodingConfig,
    reward_cfg: &RewardConfig,
    grpo_cfg: &GrpoConfig,
) -> Result<CollectedGroup, RolloutError> {
    let prompt = crate::corpus::render_prompt(&templates.rational_extraction, instance, None)?;
    let request = GenerationRequest {
        prompt: prompt.clone(),
        num_samples: grpo_cfg.group_size,
        temperature: decoding.temperature,
        max_new_tokens: decoding.max_new_tokens,
        stop_sequences: Vec::new(),
        return_logprobs: true,
    };
    let samples = backend.generate(&request)?;

    let len_p = passages_word_count(&instance.passages);
    let mut responses = Vec::with_capacity(samples.len());
    let mut rewards = Vec::with_capacity(samples.len());
    let mut breakdowns = Vec::with_capacity(samples.len());
    let mut regenerated = Vec::with_capacity(samples.len());

    for sample in samples {
        let parsed = parse_response(&sample.text);

        let o_r = if parsed.rationale.is_some() {
            let ctx = build_context(ContextMode::RationaleOnly, instance, &parsed, templates)?;
            greedy_completion(backend, ctx.prompt, decoding.max_new_tokens)?
        } else {
            String::new()
        };
        let o_e = if parsed.evidence.is_some() {
            let ctx = build_context(ContextMode::EvidenceOnly, instance, &parsed, templates)?;
            greedy_completion(backend, ctx.prompt, decoding.max_new_tokens)?
        } else {
            String::new()
        };

        let breakdown = score_response(
            &instance.gold_answers,
            &parsed,
            &o_r,
            &o_e,
            len_p,
            reward_cfg,
        )?;
        rewards.push(breakdown.final_reward);
        breakdowns.push(breakdown);
        regenerated.push(RegeneratedOutputs { o_r, o_e });

        // sampling-time logprobs are the old-policy logprobs by definition;
        // the reference scores come from the frozen snapshot when the
        // backend keeps one
        let logp_old = sample.token_logprobs.clone();
        let logp_ref = match backend.score_under(PolicyView::Reference, &prompt, &sample.text) {
            Ok(v) => v,
            Err(BackendError::ScoringUnsupported) => logp_old.clone(),
            Err(e) => return Err(e.into()),
        };
        responses.push(ScoredResponse {
            parsed,
            token_ids: sample.token_ids,
            logp_current: logp_old.clone(),
            logp_old,
            logp_ref,
        });
    }

    let mut group = RolloutGroup {
        instance_id: instance.id.clone(),
        responses,
        rewards,
        advantages: None,
    };
    group.populate_advantages(grpo_cfg.eps_std)?;

    Ok(CollectedGroup {
        prompt,
        group,
        breakdowns,
        regenerated,
    })
}
