//! Extractor evaluation: EM/F1 of the generated answers, answer recall
//! and compression ratio of the evidence, noise-robustness sweeps, and
//! latency benchmarking.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend, GenerationRequest};
use crate::corpus::{self, CorpusError, Passage, QAInstance, TemplateSet};
use crate::metrics::{self, MetricsError};
use crate::response::{parse_response, EXTRACT_STOP_TOKEN};
use crate::rollout::DecodingConfig;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
    #[error("no instances to evaluate")]
    EmptyDataset,
}

/// Aggregated means for one dataset; every mean carries its instance
/// count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub n_instances: usize,
    /// Instances that completed the pipeline.
    pub n_evaluated: usize,
    /// Instances skipped after a backend failure.
    pub n_failed: usize,
    /// Instances whose evidence was empty, leaving CR undefined.
    pub n_undefined_cr: usize,
    pub em: f64,
    pub f1: f64,
    pub answer_recall: f64,
    /// Mean compression ratio over the instances where it is defined.
    pub compression_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyStats {
    pub batch_size: usize,
    pub max_new_tokens: usize,
    pub n_queries: usize,
    pub mean_secs_per_query: f64,
    pub std_secs_per_query: f64,
    /// Standard deviation of output lengths in words, the batching
    /// variance diagnostic.
    pub output_len_std_words: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub n_noise: usize,
    pub summary: EvalSummary,
}

/// Evaluation results: per-dataset means, optional latency stats, and an
/// optional noise-sweep table keyed by noise level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub datasets: Vec<EvalSummary>,
    pub latency: Option<LatencyStats>,
    pub noise_table: Vec<NoiseRow>,
}

impl MetricsReport {
    pub fn from_summary(summary: EvalSummary) -> Self {
        Self {
            datasets: vec![summary],
            latency: None,
            noise_table: Vec::new(),
        }
    }
}

fn generate_one(
    backend: &dyn GenerationBackend,
    prompt: String,
    max_new_tokens: usize,
    stop: Vec<String>,
) -> Result<String, BackendError> {
    let req = GenerationRequest {
        prompt,
        num_samples: 1,
        temperature: 0.0,
        max_new_tokens,
        stop_sequences: stop,
        return_logprobs: false,
    };
    Ok(backend.generate(&req)?.remove(0).text)
}

/// Evaluate an extractor/generator pair over a dataset.
///
/// Extraction decodes greedily and stops at the extract close tag; the
/// generator answers from the extracted evidence through the QA template.
/// Backend failures are recorded per instance and the instance skipped.
pub fn evaluate(
    dataset_name: &str,
    instances: &[QAInstance],
    extractor: &dyn GenerationBackend,
    generator: &dyn GenerationBackend,
    templates: &TemplateSet,
    decoding: &DecodingConfig,
) -> Result<EvalSummary, EvalError> {
    if instances.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut n_evaluated = 0usize;
    let mut n_failed = 0usize;
    let mut n_undefined_cr = 0usize;
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut ar_sum = 0.0;
    let mut cr_sum = 0.0;
    let mut cr_count = 0usize;

    for inst in instances {
        let extraction_prompt = corpus::render_prompt(&templates.rational_extraction, inst, None)?;
        let raw = match generate_one(
            extractor,
            extraction_prompt,
            decoding.max_new_tokens,
            vec![EXTRACT_STOP_TOKEN.to_string()],
        ) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("extractor failed on {}: {e}", inst.id);
                n_failed += 1;
                continue;
            }
        };
        let evidence = parse_response(&raw).evidence_text().to_string();

        let qa_prompt = corpus::render_prompt(&templates.rag_qa, inst, Some(&evidence))?;
        let prediction =
            match generate_one(generator, qa_prompt, decoding.max_new_tokens, Vec::new()) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("generator failed on {}: {e}", inst.id);
                    n_failed += 1;
                    continue;
                }
            };

        em_sum += metrics::exact_match(&prediction, &inst.gold_answers)? as f64;
        f1_sum += metrics::unigram_f1(&prediction, &inst.gold_answers)?;
        ar_sum += metrics::answer_recall(&evidence, &inst.gold_answers)? as f64;
        match metrics::compression_ratio(&inst.passages, &evidence) {
            Ok(cr) => {
                cr_sum += cr;
                cr_count += 1;
            }
            Err(MetricsError::EmptyEvidence) => n_undefined_cr += 1,
            Err(e) => return Err(e.into()),
        }
        n_evaluated += 1;
    }

    let denom = n_evaluated.max(1) as f64;
    Ok(EvalSummary {
        dataset: dataset_name.to_string(),
        n_instances: instances.len(),
        n_evaluated,
        n_failed,
        n_undefined_cr,
        em: em_sum / denom,
        f1: f1_sum / denom,
        answer_recall: ar_sum / denom,
        compression_ratio: if cr_count > 0 {
            Some(cr_sum / cr_count as f64)
        } else {
            None
        },
    })
}

fn stable_id_hash(id: &str) -> u64 {
    // FNV-1a; the per-instance noise seed must not depend on iteration order
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Evaluate under increasing retrieval noise. Level 0 evaluates the plain
/// dataset; higher levels mix in that many pool passages per instance.
#[allow(clippy::too_many_arguments)]
pub fn noise_sweep(
    dataset_name: &str,
    instances: &[QAInstance],
    extractor: &dyn GenerationBackend,
    generator: &dyn GenerationBackend,
    templates: &TemplateSet,
    decoding: &DecodingConfig,
    noise_pool: &[Passage],
    levels: &[usize],
    seed: u64,
) -> Result<Vec<NoiseRow>, EvalError> {
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let noisy: Result<Vec<QAInstance>, CorpusError> = instances
            .iter()
            .map(|inst| {
                let inst_seed = seed
                    .wrapping_add(stable_id_hash(&inst.id))
                    .wrapping_add(level as u64);
                corpus::inject_noise(inst, level, noise_pool, inst_seed)
            })
            .collect();
        let summary = evaluate(
            &format!("{dataset_name}+{level}noise"),
            &noisy?,
            extractor,
            generator,
            templates,
            decoding,
        )?;
        rows.push(NoiseRow {
            n_noise: level,
            summary,
        });
    }
    Ok(rows)
}

/// Wall-clock seconds per query over batched greedy extraction. The first
/// batch is a warmup excluded from timing.
pub fn latency_bench(
    instances: &[QAInstance],
    backend: &dyn GenerationBackend,
    templates: &TemplateSet,
    batch_size: usize,
    max_new_tokens: usize,
) -> Result<LatencyStats, EvalError> {
    if instances.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let batch_size = batch_size.max(1);
    let prompts: Vec<String> = instances
        .iter()
        .map(|inst| corpus::render_prompt(&templates.rational_extraction, inst, None))
        .collect::<Result<_, _>>()?;

    let mut per_query = Vec::new();
    let mut output_lens = Vec::new();
    let mut n_queries = 0usize;
    for (batch_idx, batch) in prompts.chunks(batch_size).enumerate() {
        let start = Instant::now();
        for prompt in batch {
            let text = generate_one(
                backend,
                prompt.clone(),
                max_new_tokens,
                vec![EXTRACT_STOP_TOKEN.to_string()],
            )?;
            if batch_idx > 0 {
                output_lens.push(metrics::word_count(&text) as f64);
            }
        }
        if batch_idx == 0 {
            continue; // warmup
        }
        let secs = start.elapsed().as_secs_f64() / batch.len() as f64;
        per_query.push(secs);
        n_queries += batch.len();
    }
    if per_query.is_empty() {
        return Err(EvalError::EmptyDataset);
    }

    let mean = per_query.iter().sum::<f64>() / per_query.len() as f64;
    let var = per_query.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per_query.len() as f64;
    let len_mean = output_lens.iter().sum::<f64>() / output_lens.len().max(1) as f64;
    let len_var = output_lens
        .iter()
        .map(|v| (v - len_mean).powi(2))
        .sum::<f64>()
        / output_lens.len().max(1) as f64;

    Ok(LatencyStats {
        batch_size,
        max_new_tokens,
        n_queries,
        mean_secs_per_query: mean,
        std_secs_per_query: var.sqrt(),
        output_len_std_words: len_var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{toy_instances, toy_noise_pool, GenerationResult, ToyPolicy};
    use crate::corpus::Split;
    use crate::response::{EXTRACT_CLOSE, EXTRACT_OPEN, REASON_CLOSE, REASON_OPEN};

    /// Extractor whose evidence is the passages verbatim (titles + bodies).
    struct IdentityExtractor;

    impl GenerationBackend for IdentityExtractor {
        fn name(&self) -> &str {
            "identity"
        }
        fn generate(
            &self,
            request: &GenerationRequest,
        ) -> Result<Vec<GenerationResult>, BackendError> {
            // reads the passage section back out of the prompt
            let body = request
                .prompt
                .split("Passages:")
                .nth(1)
                .unwrap_or("")
                .replace("\n", " ");
            let mut evidence_words: Vec<&str> = Vec::new();
            for w in body.split_whitespace() {
                if w == "Passage" {
                    continue;
                }
                if w.chars().next().is_some_and(|c| c.is_ascii_digit()) && w.ends_with(':') {
                    continue;
                }
                evidence_words.push(w);
            }
            let text = format!(
                "{REASON_OPEN} looked {REASON_CLOSE} {EXTRACT_OPEN} {} {EXTRACT_CLOSE}",
                evidence_words.join(" ")
            );
            Ok(vec![
                GenerationResult {
                    text,
                    token_ids: vec![],
                    token_logprobs: vec![],
                    finish_reason: crate::backend::FinishReason::Stop,
                };
                request.num_samples
            ])
        }
        fn score(&self, _p: &str, _c: &str) -> Result<Vec<f64>, BackendError> {
            Err(BackendError::ScoringUnsupported)
        }
    }

    /// Extractor that always returns an empty evidence segment.
    struct EmptyExtractor;

    impl GenerationBackend for EmptyExtractor {
        fn name(&self) -> &str {
            "empty"
        }
        fn generate(
            &self,
            request: &GenerationRequest,
        ) -> Result<Vec<GenerationResult>, BackendError> {
            Ok(vec![
                GenerationResult {
                    text: format!(
                        "{REASON_OPEN} none {REASON_CLOSE} {EXTRACT_OPEN}{EXTRACT_CLOSE}"
                    ),
                    token_ids: vec![],
                    token_logprobs: vec![],
                    finish_reason: crate::backend::FinishReason::Stop,
                };
                request.num_samples
            ])
        }
        fn score(&self, _p: &str, _c: &str) -> Result<Vec<f64>, BackendError> {
            Err(BackendError::ScoringUnsupported)
        }
    }

    #[test]
    fn identity_extractor_gives_cr_one_and_passage_level_ar() {
        let instances = toy_instances(12, Split::Test, 61);
        let toy = ToyPolicy::new(61);
        let templates = TemplateSet::default();
        let summary = evaluate(
            "toy",
            &instances,
            &IdentityExtractor,
            &toy,
            &templates,
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(summary.n_evaluated, 12);
        let cr = summary.compression_ratio.unwrap();
        assert!((cr - 1.0).abs() < 1e-9, "cr {cr}");
        // every toy instance's passages contain the gold value
        assert_eq!(summary.answer_recall, 1.0);
        // the generator reads the full pair from the evidence
        assert_eq!(summary.em, 1.0);
    }

    #[test]
    fn empty_extractor_counts_undefined_cr_and_falls_back_closed_book() {
        let instances = toy_instances(10, Split::Test, 62);
        let toy = ToyPolicy::new(62);
        let templates = TemplateSet::default();
        let summary = evaluate(
            "toy",
            &instances,
            &EmptyExtractor,
            &toy,
            &templates,
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(summary.n_undefined_cr, 10);
        assert!(summary.compression_ratio.is_none());
        // the toy generator without evidence answers "unk": closed-book behavior
        assert_eq!(summary.em, 0.0);
        assert_eq!(summary.answer_recall, 0.0);
    }

    #[test]
    fn evaluate_is_read_only_for_the_policy() {
        let instances = toy_instances(4, Split::Test, 63);
        let toy = ToyPolicy::with_random_params(63, 1.0);
        let before = toy.params().clone();
        let templates = TemplateSet::default();
        evaluate(
            "toy",
            &instances,
            &toy,
            &toy,
            &templates,
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(*toy.params(), before);
    }

    #[test]
    fn noise_level_zero_equals_plain_evaluate() {
        let instances = toy_instances(8, Split::Test, 64);
        let toy = ToyPolicy::new(64);
        let templates = TemplateSet::default();
        let decoding = DecodingConfig::default();
        let pool = toy_noise_pool(40, 64);
        let plain = evaluate("toy", &instances, &toy, &toy, &templates, &decoding).unwrap();
        let rows = noise_sweep(
            "toy",
            &instances,
            &toy,
            &toy,
            &templates,
            &decoding,
            &pool,
            &[0, 2],
            9,
        )
        .unwrap();
        assert_eq!(rows[0].summary.em, plain.em);
        assert_eq!(rows[0].summary.f1, plain.f1);
        assert_eq!(rows[0].summary.answer_recall, plain.answer_recall);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].n_noise, 2);
    }

    #[test]
    fn noise_sweep_is_deterministic_under_seed() {
        let instances = toy_instances(6, Split::Test, 65);
        let toy = ToyPolicy::new(65);
        let templates = TemplateSet::default();
        let decoding = DecodingConfig::default();
        let pool = toy_noise_pool(40, 65);
        let run = || {
            noise_sweep(
                "toy",
                &instances,
                &toy,
                &toy,
                &templates,
                &decoding,
                &pool,
                &[0, 4, 8],
                123,
            )
            .unwrap()
            .iter()
            .map(|r| (r.n_noise, r.summary.em, r.summary.f1))
            .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn latency_reports_positive_mean() {
        let instances = toy_instances(30, Split::Test, 66);
        let toy = ToyPolicy::new(66);
        let templates = TemplateSet::default();
        let stats = latency_bench(&instances, &toy, &templates, 5, 16).unwrap();
        assert!(stats.mean_secs_per_query > 0.0);
        assert!(stats.std_secs_per_query >= 0.0);
        assert_eq!(stats.n_queries, 25); // first batch is warmup
    }

    #[test]
    fn identical_prompts_give_zero_output_length_std() {
        let inst = toy_instances(1, Split::Test, 68).remove(0);
        let instances: Vec<QAInstance> = std::iter::repeat_n(inst, 24).collect();
        let toy = ToyPolicy::new(68);
        let templates = TemplateSet::default();
        let stats = latency_bench(&instances, &toy, &templates, 4, 16).unwrap();
        assert_eq!(stats.output_len_std_words, 0.0);
    }

    /// Fails on every second generate call.
    struct FlakyBackend {
        inner: ToyPolicy,
        calls: std::sync::atomic::AtomicUsize,
    }

    impl GenerationBackend for FlakyBackend {
        fn name(&self) -> &str {
            "flaky"
        }
        fn generate(
            &self,
            request: &GenerationRequest,
        ) -> Result<Vec<GenerationResult>, BackendError> {
            let n = self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if n.is_multiple_of(2) {
                return Err(BackendError::Unreachable("injected fault".to_string()));
            }
            self.inner.generate(request)
        }
        fn score(&self, p: &str, c: &str) -> Result<Vec<f64>, BackendError> {
            self.inner.score(p, c)
        }
    }

    #[test]
    fn backend_failures_are_counted_and_skipped() {
        let instances = toy_instances(10, Split::Test, 69);
        let flaky = FlakyBackend {
            inner: ToyPolicy::new(69),
            calls: std::sync::atomic::AtomicUsize::new(0),
        };
        let generator = ToyPolicy::new(69);
        let templates = TemplateSet::default();
        let summary = evaluate(
            "toy",
            &instances,
            &flaky,
            &generator,
            &templates,
            &DecodingConfig::default(),
        )
        .unwrap();
        assert_eq!(summary.n_failed, 5);
        assert_eq!(summary.n_evaluated, 5);
        assert_eq!(summary.n_instances, 10);
    }

    #[test]
    fn doubling_max_new_tokens_never_cuts_latency() {
        let instances = toy_instances(160, Split::Test, 67);
        let toy = ToyPolicy::new(67);
        let templates = TemplateSet::default();
        // interleaved min-of-n: scheduler noise only ever adds time, so
        // the minimum tracks the true per-query work
        let mut mins = [f64::MAX; 3];
        for _ in 0..7 {
            for (i, mnt) in [2usize, 4, 8].into_iter().enumerate() {
                let stats = latency_bench(&instances, &toy, &templates, 8, mnt).unwrap();
                mins[i] = mins[i].min(stats.mean_secs_per_query);
            }
        }
        assert!(mins[1] >= mins[0] * 0.9, "4 tokens vs 2: {mins:?}");
        assert!(mins[2] >= mins[1] * 0.9, "8 tokens vs 4: {mins:?}");
    }
}
