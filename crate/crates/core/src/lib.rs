//! Rational evidence extraction for retrieval-augmented QA: a reason-then-
//! extract response format, verifiable answer/length/format rewards,
//! knowledge-token-masked regeneration, and std-clipped group-relative
//! policy optimization, verified end to end on an analytic toy policy.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod grpo;
pub mod masking;
pub mod metrics;
pub mod response;
pub mod reward;
pub mod rollout;
pub mod train;

pub use backend::{
    toy_instances, toy_noise_pool, toy_vocab, BackendError, FinishReason, GenerationBackend,
    GenerationRequest, GenerationResult, HttpBackendConfig, InferenceClient, ParamGradient,
    PolicyView, ToyPolicy,
};
pub use config::{BackendKind, ConfigError, RunConfig};
pub use corpus::{
    inject_noise, join_passages, load_dataset, render_prompt, write_dataset, CorpusError, Passage,
    PromptTemplate, QAInstance, Split, TemplateName, TemplateSet, NOISE_LEVELS,
};
pub use eval::{
    evaluate, latency_bench, noise_sweep, EvalSummary, LatencyStats, MetricsReport, NoiseRow,
};
pub use grpo::{
    clipped_surrogate, group_advantages, grpo_objective, kl_penalty, token_ratio, GrpoConfig,
    GrpoError, GrpoObjective, RolloutGroup, ScoredResponse,
};
pub use masking::{assert_no_leakage, build_context, ContextMode, MaskedContext, MaskingError};
pub use metrics::{
    answer_recall, compression_ratio, exact_match, normalize, unigram_f1, word_count, MetricsError,
    TokenBag,
};
pub use response::{check_format, parse_response, ParsedResponse, EXTRACT_STOP_TOKEN};
pub use reward::{
    answer_rewards, evidence_length_reward, final_reward, format_reward, rationale_length_reward,
    score_response, RewardBreakdown, RewardConfig, RewardError,
};
pub use rollout::{collect_rollout_group, CollectedGroup, DecodingConfig, RolloutError};
pub use train::{train, DynamicsRecord, TrainError, TrainOutcome};
