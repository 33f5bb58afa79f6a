//! Text normalization and QA metrics: unigram F1, Exact Match, Answer
//! Recall, and Compression Ratio.
//!
//! Normalization follows the SQuAD convention (lowercase, strip
//! punctuation, drop English articles, collapse whitespace) so that EM/F1
//! numbers are comparable with standard QA evaluation scripts. Multi-gold
//! inputs aggregate by max over the aliases.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::Passage;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("golds list is empty")]
    EmptyGolds,
    #[error("evidence is empty; compression ratio undefined")]
    EmptyEvidence,
}

/// Normalized token view of a text: the ordered unigrams after the
/// normalization pipeline, plus the raw whitespace word count of the
/// source (used for length accounting, which deliberately does not drop
/// articles or punctuation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBag {
    pub tokens: Vec<String>,
    pub source_len_words: usize,
}

impl TokenBag {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Multiset view: token -> occurrence count.
    pub fn counts(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::new();
        for t in &self.tokens {
            *map.entry(t.as_str()).or_insert(0) += 1;
        }
        map
    }

    /// Tokens re-joined with single spaces; the canonical normalized string.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_article(token: &str) -> bool {
    matches!(token, "a" | "an" | "the")
}

/// Lowercase, remove punctuation, drop articles, split on whitespace.
pub fn normalize(text: &str) -> TokenBag {
    let source_len_words = word_count(text);
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let tokens = cleaned
        .split_whitespace()
        .filter(|t| !is_article(t))
        .map(str::to_owned)
        .collect();
    TokenBag {
        tokens,
        source_len_words,
    }
}

/// Whitespace word count of raw (un-normalized) text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn f1_single(pred: &TokenBag, gold: &TokenBag) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let gold_counts = gold.counts();
    let pred_counts = pred.counts();
    let common: usize = pred_counts
        .iter()
        .map(|(tok, &n)| n.min(gold_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.tokens.len() as f64;
    let recall = common as f64 / gold.tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Unigram F1 of a prediction against gold aliases, max-aggregated.
///
/// Both-empty normalized bags score 1.0; one empty side scores 0.0.
pub fn unigram_f1(prediction: &str, golds: &[String]) -> Result<f64, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::EmptyGolds);
    }
    let pred = normalize(prediction);
    Ok(golds
        .iter()
        .map(|g| f1_single(&pred, &normalize(g)))
        .fold(0.0, f64::max))
}

/// 1 iff the normalized prediction string equals any normalized gold string.
pub fn exact_match(prediction: &str, golds: &[String]) -> Result<u8, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::EmptyGolds);
    }
    let pred = normalize(prediction).joined();
    Ok(golds.iter().any(|g| normalize(g).joined() == pred) as u8)
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

/// Answer Recall: 1 iff any normalized gold occurs as a contiguous token
/// run inside the normalized evidence. Golds that normalize to nothing
/// (pure articles/punctuation) cannot match.
pub fn answer_recall(evidence: &str, golds: &[String]) -> Result<u8, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::EmptyGolds);
    }
    let ev = normalize(evidence);
    Ok(golds
        .iter()
        .any(|g| contains_contiguous(&ev.tokens, &normalize(g).tokens)) as u8)
}

/// Total whitespace word count of passage titles and bodies.
pub fn passages_word_count(passages: &[Passage]) -> usize {
    passages
        .iter()
        .map(|p| word_count(&p.title) + word_count(&p.body))
        .sum()
}

/// Compression Ratio: total passage length over evidence length, in
/// whitespace words. Errors when the evidence has no words.
pub fn compression_ratio(passages: &[Passage], evidence: &str) -> Result<f64, MetricsError> {
    let ev_words = word_count(evidence);
    if ev_words == 0 {
        return Err(MetricsError::EmptyEvidence);
    }
    Ok(passages_word_count(passages) as f64 / ev_words as f64)
}
