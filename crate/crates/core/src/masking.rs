//! Hard-masked generation contexts for the three outputs.
//!
//! Instead of editing a cached longer prompt, every context is rendered
//! from scratch so its token probabilities are those of cold generation:
//! the rationale-only context keeps the passages and rationale but not the
//! evidence, the evidence-only context keeps nothing but the question and
//! evidence, and the full context is the extraction conversation prefix
//! itself.

use thiserror::Error;

use crate::corpus::{self, CorpusError, QAInstance, TemplateSet};
use crate::metrics::normalize;
use crate::response::ParsedResponse;

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error("{mode} context requires the {segment} segment, which is absent")]
    MissingSegment {
        mode: ContextMode,
        segment: &'static str,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    /// Question, passages, and rationale; evidence masked out.
    RationaleOnly,
    /// Question and evidence only; passages and rationale masked out.
    EvidenceOnly,
    /// The unmasked extraction conversation prefix.
    Full,
}

impl std::fmt::Display for ContextMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContextMode::RationaleOnly => write!(f, "rationale_only"),
            ContextMode::EvidenceOnly => write!(f, "evidence_only"),
            ContextMode::Full => write!(f, "full"),
        }
    }
}

/// A freshly rendered prompt together with the segments that must not
/// appear in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedContext {
    pub mode: ContextMode,
    pub prompt: String,
    pub masked_segments: Vec<String>,
}

/// Build the generation context for one mode from a parsed response.
pub fn build_context(
    mode: ContextMode,
    instance: &QAInstance,
    parsed: &ParsedResponse,
    templates: &TemplateSet,
) -> Result<MaskedContext, MaskingError> {
    match mode {
        ContextMode::RationaleOnly => {
            let rationale = parsed
                .rationale
                .as_ref()
                .ok_or(MaskingError::MissingSegment {
                    mode,
                    segment: "rationale",
                })?;
            let document = format!(
                "{}\n\nReasoning: {}",
                corpus::join_passages(&instance.passages),
                rationale.text
            );
            let prompt = corpus::render_prompt(&templates.rag_qa, instance, Some(&document))?;
            let masked_segments = parsed.evidence.iter().map(|e| e.text.clone()).collect();
            Ok(MaskedContext {
                mode,
                prompt,
                masked_segments,
            })
        }
        ContextMode::EvidenceOnly => {
            let evidence = parsed
                .evidence
                .as_ref()
                .ok_or(MaskingError::MissingSegment {
                    mode,
                    segment: "evidence",
                })?;
            let prompt = corpus::render_prompt(&templates.rag_qa, instance, Some(&evidence.text))?;
            let mut masked_segments: Vec<String> =
                instance.passages.iter().map(|p| p.body.clone()).collect();
            if let Some(r) = &parsed.rationale {
                masked_segments.push(r.text.clone());
            }
            Ok(MaskedContext {
                mode,
                prompt,
                masked_segments,
            })
        }
        ContextMode::Full => {
            if parsed.rationale.is_none() {
                return Err(MaskingError::MissingSegment {
                    mode,
                    segment: "rationale",
                });
            }
            let evidence = parsed
                .evidence
                .as_ref()
                .ok_or(MaskingError::MissingSegment {
                    mode,
                    segment: "evidence",
                })?;
            let extraction = corpus::render_prompt(&templates.rational_extraction, instance, None)?;
            // The conversation prefix at the point the in-line answer is
            // produced: extraction prompt plus the response up to the
            // answer segment.
            let prefix_end = match &parsed.answer {
                Some(a) => a.start,
                None => evidence.end + crate::response::EXTRACT_CLOSE.len(),
            };
            let prompt = format!("{extraction}{}", &parsed.raw[..prefix_end]);
            Ok(MaskedContext {
                mode,
                prompt,
                masked_segments: Vec::new(),
            })
        }
    }
}

const SHINGLE_WORDS: usize = 4;

/// True iff no masked segment leaks into the prompt.
///
/// A leak is any run of `SHINGLE_WORDS` consecutive normalized words of a
/// masked segment occurring contiguously in the normalized prompt.
/// Segments shorter than the shingle width are below the detection
/// threshold.
pub fn assert_no_leakage(ctx: &MaskedContext) -> bool {
    let prompt_tokens = normalize(&ctx.prompt).tokens;
    for segment in &ctx.masked_segments {
        let seg_tokens = normalize(segment).tokens;
        if seg_tokens.len() < SHINGLE_WORDS {
            continue;
        }
        for shingle in seg_tokens.windows(SHINGLE_WORDS) {
            if prompt_tokens
                .windows(SHINGLE_WORDS)
                .any(|w| w.iter().zip(shingle).all(|(a, b)| a == b))
            {
                return false;
            }
        }
    }
    true
}
