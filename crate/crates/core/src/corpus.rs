//! QA dataset ingestion, prompt template rendering, and retrieval-noise
//! injection.
//!
//! Datasets are line-delimited UTF-8 records, one self-contained JSON
//! object per line with `id`, `question`, `answers`, and ranked
//! `passages`. Loading validates the invariants (non-empty answers,
//! contiguous passage ranks) and reports offending line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::normalize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("dataset {path} is empty")]
    EmptyDataset { path: String },
    #[error("noise pool has {available} passages, need {requested}")]
    PoolTooSmall { available: usize, requested: usize },
    #[error("noise pool passage {doc_id} duplicates an instance passage")]
    PoolNotDisjoint { doc_id: String },
    #[error("template {template}: unresolved placeholder {placeholder}")]
    UnresolvedPlaceholder {
        template: String,
        placeholder: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One retrieved passage, rank 1 = best.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    #[serde(default)]
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
    pub rank: usize,
}

/// One query with its gold answers and top-k retrieved passages; the unit
/// of rollout and evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub passages: Vec<Passage>,
    pub split: Split,
}

/// On-disk record shape (one JSON object per line).
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    question: String,
    answers: Vec<String>,
    passages: Vec<Passage>,
}

fn validate_record(rec: &Record) -> Result<(), String> {
    if rec.question.trim().is_empty() {
        return Err("question is empty".to_string());
    }
    if rec.answers.is_empty() {
        return Err("gold_answers is empty".to_string());
    }
    if let Some(bad) = rec.answers.iter().find(|a| normalize(a).is_empty()) {
        return Err(format!("gold answer {bad:?} is empty after normalization"));
    }
    if rec.passages.is_empty() {
        return Err("passages is empty".to_string());
    }
    for (i, p) in rec.passages.iter().enumerate() {
        if p.body.trim().is_empty() {
            return Err(format!("passage {} has empty body", i + 1));
        }
        if p.rank != i + 1 {
            return Err(format!(
                "passage ranks must be contiguous from 1; position {} has rank {}",
                i + 1,
                p.rank
            ));
        }
    }
    Ok(())
}

/// Load a line-delimited dataset, assigning every record to `split`.
pub fn load_dataset(path: &Path, split: Split) -> Result<Vec<QAInstance>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        validate_record(&rec).map_err(|reason| CorpusError::BadRecord {
            line: line_no,
            reason,
        })?;
        out.push(QAInstance {
            id: rec.id,
            question: rec.question,
            gold_answers: rec.answers,
            passages: rec.passages,
            split,
        });
    }
    if out.is_empty() {
        return Err(CorpusError::EmptyDataset {
            path: path.display().to_string(),
        });
    }
    Ok(out)
}

/// Write instances back out in the line-delimited record format.
pub fn write_dataset(path: &Path, instances: &[QAInstance]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        let rec = Record {
            id: inst.id.clone(),
            question: inst.question.clone(),
            answers: inst.gold_answers.clone(),
            passages: inst.passages.clone(),
        };
        let line = serde_json::to_string(&rec).expect("record serialization");
        writeln!(w, "{line}").map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    RagQa,
    ClosedBook,
    Cot,
    RationalExtraction,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] = [
        TemplateName::RagQa,
        TemplateName::ClosedBook,
        TemplateName::Cot,
        TemplateName::RationalExtraction,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateName::RagQa => "rag_qa",
            TemplateName::ClosedBook => "closed_book",
            TemplateName::Cot => "cot",
            TemplateName::RationalExtraction => "rational_extraction",
        }
    }
}

/// A prompt template with `{question}` and `{passages}`/`{document}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
}

impl PromptTemplate {
    /// The built-in template text shipped with the crate.
    pub fn builtin(name: TemplateName) -> Self {
        let body = match name {
            TemplateName::RagQa => include_str!("../templates/rag_qa.txt"),
            TemplateName::ClosedBook => include_str!("../templates/closed_book.txt"),
            TemplateName::Cot => include_str!("../templates/cot.txt"),
            TemplateName::RationalExtraction => {
                include_str!("../templates/rational_extraction.txt")
            }
        };
        Self {
            name,
            body: body.to_string(),
        }
    }

    pub fn from_file(name: TemplateName, path: &Path) -> Result<Self, CorpusError> {
        let body = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self { name, body })
    }
}

/// The four templates used by the pipeline, each overridable from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub rag_qa: PromptTemplate,
    pub closed_book: PromptTemplate,
    pub cot: PromptTemplate,
    pub rational_extraction: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            rag_qa: PromptTemplate::builtin(TemplateName::RagQa),
            closed_book: PromptTemplate::builtin(TemplateName::ClosedBook),
            cot: PromptTemplate::builtin(TemplateName::Cot),
            rational_extraction: PromptTemplate::builtin(TemplateName::RationalExtraction),
        }
    }
}

impl TemplateSet {
    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        match name {
            TemplateName::RagQa => &self.rag_qa,
            TemplateName::ClosedBook => &self.closed_book,
            TemplateName::Cot => &self.cot,
            TemplateName::RationalExtraction => &self.rational_extraction,
        }
    }

    pub fn set(&mut self, template: PromptTemplate) {
        match template.name {
            TemplateName::RagQa => self.rag_qa = template,
            TemplateName::ClosedBook => self.closed_book = template,
            TemplateName::Cot => self.cot = template,
            TemplateName::RationalExtraction => self.rational_extraction = template,
        }
    }
}

/// Join passages with explicit rank headers so a rationale can cite
/// "Passage 2" unambiguously.
pub fn join_passages(passages: &[Passage]) -> String {
    passages
        .iter()
        .map(|p| format!("Passage {}: {}\n{}", p.rank, p.title, p.body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Placeholders `{word}` appearing in a template body.
fn template_placeholders(body: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let name = &after[..close];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_') {
            found.push(format!("{{{name}}}"));
        }
        rest = &after[close + 1..];
    }
    found
}

/// Render a template for an instance.
///
/// `{passages}` resolves to the rank-ordered passage join. `{document}`
/// resolves to `extra` when given (e.g. extracted evidence), otherwise to
/// the passage join. Rendering fails when the template names a
/// placeholder that cannot be resolved.
pub fn render_prompt(
    template: &PromptTemplate,
    instance: &QAInstance,
    extra: Option<&str>,
) -> Result<String, CorpusError> {
    for placeholder in template_placeholders(&template.body) {
        if !matches!(
            placeholder.as_str(),
            "{question}" | "{passages}" | "{document}"
        ) {
            return Err(CorpusError::UnresolvedPlaceholder {
                template: template.name.as_str().to_string(),
                placeholder,
            });
        }
    }
    let mut text = template.body.clone();
    if text.contains("{question}") {
        text = text.replace("{question}", &instance.question);
    }
    if text.contains("{passages}") {
        text = text.replace("{passages}", &join_passages(&instance.passages));
    }
    if text.contains("{document}") {
        let document = match extra {
            Some(doc) => doc.to_string(),
            None => join_passages(&instance.passages),
        };
        text = text.replace("{document}", &document);
    }
    Ok(text)
}

/// The noise levels of the robustness protocol.
pub const NOISE_LEVELS: [usize; 5] = [0, 2, 4, 6, 8];

/// Return a copy of `instance` whose passage list is the original
/// passages plus `n_noise` drawn from `noise_pool` without replacement,
/// shuffled deterministically by `seed` and re-ranked 1..k+n.
///
/// `n_noise = 0` returns a plain copy. Levels outside the standard
/// protocol are permitted but logged.
pub fn inject_noise(
    instance: &QAInstance,
    n_noise: usize,
    noise_pool: &[Passage],
    seed: u64,
) -> Result<QAInstance, CorpusError> {
    if !NOISE_LEVELS.contains(&n_noise) {
        log::warn!("noise level {n_noise} is outside the standard protocol {NOISE_LEVELS:?}");
    }
    if n_noise == 0 {
        return Ok(instance.clone());
    }
    if noise_pool.len() < n_noise {
        return Err(CorpusError::PoolTooSmall {
            available: noise_pool.len(),
            requested: n_noise,
        });
    }
    if let Some(dup) = noise_pool.iter().find(|p| {
        instance
            .passages
            .iter()
            .any(|q| q.doc_id == p.doc_id && q.body == p.body)
    }) {
        return Err(CorpusError::PoolNotDisjoint {
            doc_id: dup.doc_id.clone(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool_indices: Vec<usize> = (0..noise_pool.len()).collect();
    pool_indices.shuffle(&mut rng);
    let sampled = pool_indices[..n_noise]
        .iter()
        .map(|&i| noise_pool[i].clone());

    let mut combined: Vec<Passage> = instance.passages.clone();
    combined.extend(sampled);
    combined.shuffle(&mut rng);
    for (i, p) in combined.iter_mut().enumerate() {
        p.rank = i + 1;
    }

    let mut out = instance.clone();
    out.passages = combined;
    Ok(out)
}
