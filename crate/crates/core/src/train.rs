//! The toy training loop: collect rollout groups, evaluate the GRPO
//! objective, ascend the analytic gradient, and log per-step dynamics.
//!
//! Training is strictly sequential and every random draw derives from the
//! run seed, so two runs with the same config produce byte-identical
//! dynamics logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{toy_instances, BackendError, ParamGradient, PolicyView, ToyPolicy};
use crate::config::{BackendKind, ConfigError, RunConfig};
use crate::corpus::{self, CorpusError, QAInstance, Split, TemplateSet};
use crate::grpo::{grpo_objective, GrpoError};
use crate::metrics::word_count;
use crate::reward::score_response;
use crate::rollout::{collect_rollout_group, CollectedGroup, RolloutError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("step {step}: non-finite objective ({detail})")]
    NonFiniteObjective { step: usize, detail: String },
    #[error("training requires the toy backend")]
    NotToyBackend,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One line of the training dynamics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub step: usize,
    pub mean_final: f64,
    pub mean_ans_r: f64,
    pub mean_ans_e: f64,
    pub mean_ans_f: f64,
    /// Mean segment lengths in whitespace words.
    pub mean_len_reason: f64,
    pub mean_len_evidence: f64,
    pub mean_len_answer: f64,
    pub clip_fraction: f64,
    pub mean_kl: f64,
    pub format_rate: f64,
    pub max_abs_advantage: f64,
    /// max over groups of (max R - min R) / eps_std; absent when the clip
    /// floor is disabled.
    pub advantage_bound: Option<f64>,
    /// Groups skipped because zero-variance rewards with eps_std = 0 leave
    /// advantages undefined.
    pub degenerate_groups: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub steps: usize,
    pub dynamics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub final_policy_path: PathBuf,
    pub best_dev_reward: Option<f64>,
    pub policy: ToyPolicy,
    pub records: Vec<DynamicsRecord>,
}

/// Mean greedy final reward over a dataset; used for best-on-dev
/// checkpoint selection.
pub fn greedy_mean_reward(
    policy: &ToyPolicy,
    instances: &[QAInstance],
    templates: &TemplateSet,
    config: &RunConfig,
) -> Result<f64, TrainError> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut decoding = config.decoding.clone();
    decoding.temperature = 0.0;
    let mut grpo = config.grpo.clone();
    // two greedy samples are identical; the group is only a carrier here
    grpo.group_size = 2;
    let mut total = 0.0;
    for inst in instances {
        match collect_rollout_group(inst, policy, templates, &decoding, &config.reward, &grpo) {
            Ok(cg) => total += cg.breakdowns[0].final_reward,
            // identical greedy samples give zero-variance groups
            Err(RolloutError::Grpo(GrpoError::DegenerateGroup)) => {
                let mut relaxed = grpo.clone();
                relaxed.eps_std = 1.0;
                let cg = collect_rollout_group(
                    inst,
                    policy,
                    templates,
                    &decoding,
                    &config.reward,
                    &relaxed,
                )?;
                total += cg.breakdowns[0].final_reward;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(total / instances.len() as f64)
}

fn load_or_synthesize(
    path: &Option<PathBuf>,
    synthetic: usize,
    split: Split,
    seed: u64,
) -> Result<Vec<QAInstance>, TrainError> {
    match path {
        Some(p) => Ok(corpus::load_dataset(p, split)?),
        None => Ok(toy_instances(synthetic, split, seed)),
    }
}

struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl EpochSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            cursor: 0,
            epoch: 0,
            seed,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(self.epoch));
        self.order.shuffle(&mut rng);
        self.cursor = 0;
        self.epoch += 1;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor >= self.order.len() {
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

fn mean<T: Copy + Into<f64>>(values: impl Iterator<Item = T>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v.into();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Train the toy policy per the run config. Returns the trained policy and
/// the full dynamics log.
pub fn train(config: &RunConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if config.backend.kind != BackendKind::Toy {
        return Err(TrainError::NotToyBackend);
    }
    let templates = config.template_set()?;
    let seed = config.seed;

    let train_set = load_or_synthesize(
        &config.dataset.train,
        config.dataset.synthetic_train,
        Split::Train,
        seed ^ 0x7261_696e,
    )?;
    let dev_set = load_or_synthesize(
        &config.dataset.dev,
        config.dataset.synthetic_dev,
        Split::Dev,
        seed ^ 0x6465_7600,
    )?;

    std::fs::create_dir_all(&config.paths.log_dir).map_err(io_err(&config.paths.log_dir))?;
    let dynamics_path = config.paths.log_dir.join("dynamics.jsonl");
    let checkpoint_path = config.paths.log_dir.join("checkpoint-best.json");
    let final_policy_path = config.paths.log_dir.join("policy-final.json");
    // keep the materialized datasets next to the run for reuse
    corpus::write_dataset(&config.paths.log_dir.join("train.jsonl"), &train_set)?;
    if !dev_set.is_empty() {
        corpus::write_dataset(&config.paths.log_dir.join("dev.jsonl"), &dev_set)?;
    }
    let log_file = File::create(&dynamics_path).map_err(io_err(&dynamics_path))?;
    let mut log = BufWriter::new(log_file);

    let mut policy = ToyPolicy::new(seed ^ 0x706f_6c69);
    policy.freeze_reference();

    let steps = config.total_steps(train_set.len());
    let mut sampler = EpochSampler::new(train_set.len(), seed ^ 0x7368_7566);
    let mut best_dev: Option<f64> = None;
    let mut records = Vec::with_capacity(steps);

    for step in 1..=steps {
        policy.sync_old();
        let batch = sampler.next_batch(config.train.batch_size);

        let mut collected: Vec<CollectedGroup> = Vec::with_capacity(batch.len());
        let mut degenerate_groups = 0usize;
        for &idx in &batch {
            match collect_rollout_group(
                &train_set[idx],
                &policy,
                &templates,
                &config.decoding,
                &config.reward,
                &config.grpo,
            ) {
                Ok(cg) => collected.push(cg),
                Err(RolloutError::Grpo(GrpoError::DegenerateGroup)) => degenerate_groups += 1,
                Err(e) => return Err(e.into()),
            }
        }

        let mut clip_fraction = 0.0;
        let mut mean_kl = 0.0;
        if !collected.is_empty() {
            let n_groups = collected.len() as f64;
            for _inner in 0..config.grpo.inner_epochs {
                let mut grad = ParamGradient::zeros();
                clip_fraction = 0.0;
                mean_kl = 0.0;
                for cg in &mut collected {
                    let mut token_lists = Vec::with_capacity(cg.group.responses.len());
                    for resp in &mut cg.group.responses {
                        let tokens = policy.score_tokens(
                            PolicyView::Current,
                            &cg.prompt,
                            &resp.parsed.raw,
                        )?;
                        resp.logp_current = tokens.iter().map(|t| t.logprob).collect();
                        token_lists.push(tokens);
                    }
                    let obj = grpo_objective(&cg.group, &config.grpo)?;
                    if !obj.value.is_finite() {
                        return Err(TrainError::NonFiniteObjective {
                            step,
                            detail: format!(
                                "instance {} produced objective {}",
                                cg.group.instance_id, obj.value
                            ),
                        });
                    }
                    for (tokens, coeffs) in token_lists.iter().zip(&obj.dlogp_current) {
                        let scaled: Vec<f64> = coeffs.iter().map(|c| c / n_groups).collect();
                        policy.accumulate_gradient(&cg.prompt, tokens, &scaled, &mut grad);
                    }
                    clip_fraction += obj.clip_fraction / n_groups;
                    mean_kl += obj.mean_kl / n_groups;
                }
                policy.apply_gradient(&grad, config.train.learning_rate)?;
            }
        }

        let breakdowns = collected.iter().flat_map(|cg| cg.breakdowns.iter());
        let responses = collected.iter().flat_map(|cg| cg.group.responses.iter());
        let advantages = collected
            .iter()
            .filter_map(|cg| cg.group.advantages.as_ref())
            .flatten();
        let record = DynamicsRecord {
            step,
            mean_final: mean(breakdowns.clone().map(|b| b.final_reward)),
            mean_ans_r: mean(breakdowns.clone().map(|b| b.ans_r)),
            mean_ans_e: mean(breakdowns.clone().map(|b| b.ans_e)),
            mean_ans_f: mean(breakdowns.clone().map(|b| b.ans_f)),
            mean_len_reason: mean(
                responses
                    .clone()
                    .map(|r| word_count(r.parsed.rationale_text()) as f64),
            ),
            mean_len_evidence: mean(
                responses
                    .clone()
                    .map(|r| word_count(r.parsed.evidence_text()) as f64),
            ),
            mean_len_answer: mean(
                responses
                    .clone()
                    .map(|r| word_count(r.parsed.answer_text()) as f64),
            ),
            clip_fraction,
            mean_kl,
            format_rate: mean(breakdowns.clone().map(|b| b.fmt)),
            max_abs_advantage: advantages.fold(0.0, |acc: f64, &a| acc.max(a.abs())),
            advantage_bound: if config.grpo.eps_std > 0.0 {
                Some(
                    collected
                        .iter()
                        .map(|cg| {
                            let max = cg.group.rewards.iter().cloned().fold(f64::MIN, f64::max);
                            let min = cg.group.rewards.iter().cloned().fold(f64::MAX, f64::min);
                            (max - min) / config.grpo.eps_std
                        })
                        .fold(0.0, f64::max),
                )
            } else {
                None
            },
            degenerate_groups,
        };
        let line = serde_json::to_string(&record).expect("record serialization");
        writeln!(log, "{line}").map_err(io_err(&dynamics_path))?;
        records.push(record);

        if (step % config.train.eval_interval == 0 || step == steps) && !dev_set.is_empty() {
            let dev_reward = greedy_mean_reward(&policy, &dev_set, &templates, config)?;
            if best_dev.is_none_or(|b| dev_reward > b) {
                best_dev = Some(dev_reward);
                policy
                    .save(&checkpoint_path)
                    .map_err(io_err(&checkpoint_path))?;
            }
        }
    }
    log.flush().map_err(io_err(&dynamics_path))?;
    policy
        .save(&final_policy_path)
        .map_err(io_err(&final_policy_path))?;

    Ok(TrainOutcome {
        steps,
        dynamics_path,
        checkpoint_path,
        final_policy_path,
        best_dev_reward: best_dev,
        policy,
        records,
    })
}

/// Parse a dynamics log back into records.
pub fn read_dynamics_log(path: &std::path::Path) -> Result<Vec<DynamicsRecord>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let rec: DynamicsRecord = serde_json::from_str(line).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reward breakdowns for an externally supplied response file; the
/// masked outputs are regenerated by the backend at temperature 0.
pub fn score_raw_response(
    instance: &QAInstance,
    raw: &str,
    backend: &dyn crate::backend::GenerationBackend,
    templates: &TemplateSet,
    config: &RunConfig,
) -> Result<crate::reward::RewardBreakdown, TrainError> {
    use crate::backend::GenerationRequest;
    use crate::masking::{build_context, ContextMode};

    let parsed = crate::response::parse_response(raw);
    let greedy = |prompt: String| -> Result<String, TrainError> {
        let req = GenerationRequest {
            prompt,
            num_samples: 1,
            temperature: 0.0,
            max_new_tokens: config.decoding.max_new_tokens,
            stop_sequences: Vec::new(),
            return_logprobs: false,
        };
        Ok(backend.generate(&req)?.remove(0).text)
    };
    let o_r = match parsed.rationale {
        Some(_) => {
            let ctx = build_context(ContextMode::RationaleOnly, instance, &parsed, templates)
                .expect("segment checked");
            greedy(ctx.prompt)?
        }
        None => String::new(),
    };
    let o_e = match parsed.evidence {
        Some(_) => {
            let ctx = build_context(ContextMode::EvidenceOnly, instance, &parsed, templates)
                .expect("segment checked");
            greedy(ctx.prompt)?
        }
        None => String::new(),
    };
    let len_p = crate::metrics::passages_word_count(&instance.passages);
    Ok(score_response(
        &instance.gold_answers,
        &parsed,
        &o_r,
        &o_e,
        len_p,
        &config.reward,
    )
    .map_err(RolloutError::from)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(dir: &std::path::Path, steps: usize) -> RunConfig {
        let mut cfg = RunConfig::toy_default();
        cfg.dataset.synthetic_train = 16;
        cfg.dataset.synthetic_dev = 4;
        cfg.grpo.group_size = 8;
        cfg.train.max_steps = Some(steps);
        cfg.train.batch_size = 2;
        cfg.train.eval_interval = steps;
        cfg.paths.log_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn zero_learning_rate_leaves_policy_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(dir.path(), 5);
        cfg.train.learning_rate = 1e-300; // validation requires > 0
        let out = train(&cfg).unwrap();
        let p = out.policy.params();
        for row in 0..p.n_rows() {
            for col in 0..p.row_arity(row) {
                assert!(p.get(row, col).abs() < 1e-250);
            }
        }
        // flat reward curve
        let finals: Vec<f64> = out.records.iter().map(|r| r.mean_final).collect();
        let spread = finals.iter().cloned().fold(f64::MIN, f64::max)
            - finals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            spread < 0.2,
            "uniform policy rewards should stay flat, spread {spread}"
        );
    }

    #[test]
    fn writes_one_record_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config(dir.path(), 7);
        let out = train(&cfg).unwrap();
        assert_eq!(out.records.len(), 7);
        let reread = read_dynamics_log(&out.dynamics_path).unwrap();
        assert_eq!(reread.len(), 7);
        assert_eq!(reread.last().unwrap().step, 7);
    }

    #[test]
    fn same_seed_gives_identical_logs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg1 = quick_config(d1.path(), 6);
        let mut cfg2 = quick_config(d2.path(), 6);
        cfg2.paths.log_dir = d2.path().to_path_buf();
        let o1 = train(&cfg1).unwrap();
        let o2 = train(&cfg2).unwrap();
        let b1 = std::fs::read(&o1.dynamics_path).unwrap();
        let b2 = std::fs::read(&o2.dynamics_path).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn different_seed_changes_the_log() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg1 = quick_config(d1.path(), 6);
        let mut cfg2 = quick_config(d2.path(), 6);
        cfg2.seed = 43;
        let o1 = train(&cfg1).unwrap();
        let o2 = train(&cfg2).unwrap();
        let b1 = std::fs::read(&o1.dynamics_path).unwrap();
        let b2 = std::fs::read(&o2.dynamics_path).unwrap();
        assert_ne!(b1, b2);
    }

    #[test]
    fn http_backend_is_not_trainable() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(dir.path(), 1);
        cfg.backend.kind = BackendKind::Http;
        assert!(matches!(train(&cfg), Err(TrainError::NotToyBackend)));
    }

    #[test]
    fn short_run_improves_over_uniform_start() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(dir.path(), 40);
        cfg.grpo.group_size = 32;
        let out = train(&cfg).unwrap();
        let first = out.records[0].mean_final;
        let last5 = &out.records[35..];
        let late = last5.iter().map(|r| r.mean_final).sum::<f64>() / last5.len() as f64;
        assert!(
            late > first + 0.05,
            "expected improvement: first {first}, late {late}"
        );
    }
}
