//! An analytic tabular-softmax policy over a small symbolic QA world.
//!
//! The task: each instance pairs a question key with a value symbol, and
//! exactly one of five passages contains the contiguous fact pair
//! `key_k val_v`. A competent extractor answers with the canonical
//! three-tag response whose evidence copies the fact pair and whose answer
//! emits the value.
//!
//! Decoding is one decision per slot: nine slots cover the tag skeleton,
//! the rationale length, the evidence content, and the in-line answer.
//! Each slot samples from a small action set whose logits live in a table
//! indexed by (slot, context signature), where the signature is the value
//! identity readable from the prompt. Everything downstream of the logits
//! is analytic, so objective gradients can be checked against finite
//! differences exactly.
//!
//! Prompts rendered from the QA templates (rather than the extraction
//! template) are answered by a fixed read-out skill: scan the document for
//! the pair matching the question key and emit its value. Those tokens are
//! never trained; they stand in for the pretrained answer generator.

use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendError, FinishReason, GenerationBackend, GenerationRequest, GenerationResult, PolicyView,
};
use crate::corpus::{Passage, QAInstance, Split};

pub const N_KEYS: usize = 8;
pub const N_VALS: usize = 8;
/// Passages per toy instance.
pub const TOY_PASSAGES: usize = 5;

const N_SLOTS: usize = 9;
const QA_SLOT: usize = 9;
/// One signature per value identity plus one for unanswerable prompts.
const N_SIGS: usize = N_VALS + 1;
const SIG_UNANSWERABLE: usize = N_VALS;
const SLOT_ARITY: [usize; N_SLOTS] = [4, 3, 3, 3, 5, 3, 3, N_VALS + 1, 3];
const QA_ARITY: usize = N_VALS + 1;
/// Logit mass the fixed read-out puts on its chosen answer.
const READOUT_LOGIT: f64 = 12.0;

const P_FILLER: [&str; 12] = [
    "f00", "f01", "f02", "f03", "f04", "f05", "f06", "f07", "f08", "f09", "f10", "f11",
];
const R_FILLER: [&str; 8] = ["r00", "r01", "r02", "r03", "r04", "r05", "r06", "r07"];
const E_FILLER: [&str; 8] = ["e00", "e01", "e02", "e03", "e04", "e05", "e06", "e07"];

fn key_word(k: usize) -> String {
    format!("key{k}")
}

fn val_word(v: usize) -> String {
    format!("val{v}")
}

/// The full symbol vocabulary of the toy world.
pub fn toy_vocab() -> Vec<String> {
    let mut v: Vec<String> = vec![
        "<reason>".into(),
        "</reason>".into(),
        "<extract>".into(),
        "</extract>".into(),
        "<answer>".into(),
        "</answer>".into(),
    ];
    v.extend((0..N_KEYS).map(key_word));
    v.extend((0..N_VALS).map(val_word));
    v.extend(P_FILLER.iter().map(|s| s.to_string()));
    v.extend(R_FILLER.iter().map(|s| s.to_string()));
    v.extend(E_FILLER.iter().map(|s| s.to_string()));
    v.push("unk".into());
    v
}

/// What the policy reads off a prompt before decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyContext {
    pub kind: PromptKind,
    /// Key named by the question.
    pub key: Option<usize>,
    /// Value paired with the question key in the searchable text.
    pub pair_val: Option<usize>,
    /// A pair whose key differs from the question key, when present.
    pub decoy: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Extraction,
    RagQa,
    Cot,
    ClosedBook,
    Unknown,
}

impl ToyContext {
    fn signature(&self) -> usize {
        match self.pair_val {
            Some(v) => v,
            None => SIG_UNANSWERABLE,
        }
    }
}

fn parse_key_token(tok: &str) -> Option<usize> {
    tok.strip_prefix("key")?
        .parse()
        .ok()
        .filter(|&k| k < N_KEYS)
}

fn parse_val_token(tok: &str) -> Option<usize> {
    tok.strip_prefix("val")?
        .parse()
        .ok()
        .filter(|&v| v < N_VALS)
}

fn section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    Some(&prompt[start..])
}

fn question_section(prompt: &str) -> Option<&str> {
    let rest = section(prompt, "Question:")?;
    Some(rest.lines().next().unwrap_or(""))
}

fn body_section(prompt: &str) -> Option<&str> {
    for header in ["Passages:", "Document:"] {
        if let Some(rest) = section(prompt, header) {
            // the QA templates close with a trailing "Answer:" line
            let end = rest.rfind("\nAnswer:").unwrap_or(rest.len());
            return Some(&rest[..end]);
        }
    }
    None
}

fn scan_pairs(text: &str) -> Vec<(usize, usize)> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut pairs = Vec::new();
    for w in words.windows(2) {
        if let (Some(k), Some(v)) = (parse_key_token(w[0]), parse_val_token(w[1])) {
            pairs.push((k, v));
        }
    }
    pairs
}

/// Read the prompt the way the toy model "understands" it.
pub fn parse_context(prompt: &str) -> ToyContext {
    let kind = if prompt.contains("knowledge reasoner and extractor") {
        PromptKind::Extraction
    } else if prompt.contains("use the documents provided") {
        PromptKind::RagQa
    } else if prompt.contains("Let's think step by step") {
        PromptKind::Cot
    } else if prompt.contains("answer the question directly") {
        PromptKind::ClosedBook
    } else {
        PromptKind::Unknown
    };

    let key = question_section(prompt).and_then(|q| q.split_whitespace().find_map(parse_key_token));

    let (pair_val, decoy) = match (key, body_section(prompt)) {
        (Some(k), Some(body)) => {
            let pairs = scan_pairs(body);
            let pair_val = pairs.iter().find(|(pk, _)| *pk == k).map(|&(_, v)| v);
            let decoy = pairs.iter().find(|(pk, _)| *pk != k).copied();
            (pair_val, decoy)
        }
        _ => (None, None),
    };

    ToyContext {
        kind,
        key,
        pair_val,
        decoy,
    }
}

// Slot roles for the extraction response.
const SLOT_OPEN_R: usize = 0;
const SLOT_R_CONTENT: usize = 1;
const SLOT_CLOSE_R: usize = 2;
const SLOT_OPEN_E: usize = 3;
const SLOT_E_CONTENT: usize = 4;
const SLOT_CLOSE_E: usize = 5;
const SLOT_OPEN_A: usize = 6;
const SLOT_A_CONTENT: usize = 7;
const SLOT_CLOSE_A: usize = 8;

/// The action sequence of the optimal response for a context: canonical
/// tag skeleton, long rationale, pair-copying evidence, and the paired
/// value as the answer.
pub fn canonical_actions(ctx: &ToyContext) -> [usize; N_SLOTS] {
    let answer = ctx.pair_val.unwrap_or(N_VALS);
    [1, 2, 1, 1, 1, 1, 1, answer, 1]
}

fn render_action(slot: usize, action: usize, ctx: &ToyContext) -> String {
    let pair = |k: Option<usize>, v: Option<usize>| match (k, v) {
        (Some(k), Some(v)) => format!("{} {}", key_word(k), val_word(v)),
        _ => "unk".to_string(),
    };
    // index 0 is never the canonical action, so greedy decoding of the
    // uniform-initialized policy (argmax of an all-zero row) starts out
    // incompetent rather than accidentally optimal
    match slot {
        SLOT_OPEN_R => ["unk", "<reason>", "<extract>", "<answer>"][action].to_string(),
        SLOT_R_CONTENT => {
            let n = [2, 4, 8][action];
            R_FILLER[..n].join(" ")
        }
        SLOT_CLOSE_R => ["unk", "</reason>", "</extract>"][action].to_string(),
        SLOT_OPEN_E => ["unk", "<extract>", "<answer>"][action].to_string(),
        SLOT_E_CONTENT => match action {
            0 => "e06 e07".to_string(),
            // copy the fact pair verbatim
            1 => pair(ctx.key, ctx.pair_val),
            // the pair padded out to a wordy narrative
            2 => match (ctx.key, ctx.pair_val) {
                (Some(k), Some(v)) => {
                    format!(
                        "{} {} {}",
                        key_word(k),
                        val_word(v),
                        E_FILLER[..6].join(" ")
                    )
                }
                _ => E_FILLER[..6].join(" "),
            },
            // a pair about the wrong key
            3 => match ctx.decoy {
                Some((k, v)) => format!("{} {}", key_word(k), val_word(v)),
                None => "e05 e04".to_string(),
            },
            4 => String::new(),
            _ => unreachable!(),
        },
        SLOT_CLOSE_E => ["unk", "</extract>", "</answer>"][action].to_string(),
        SLOT_OPEN_A => ["unk", "<answer>", "<extract>"][action].to_string(),
        SLOT_A_CONTENT => {
            if action < N_VALS {
                val_word(action)
            } else {
                "unk".to_string()
            }
        }
        SLOT_CLOSE_A => ["unk", "</answer>", "<answer>"][action].to_string(),
        QA_SLOT => {
            if action < N_VALS {
                val_word(action)
            } else {
                "unk".to_string()
            }
        }
        _ => unreachable!(),
    }
}

fn token_id(slot: usize, action: usize) -> u32 {
    (slot * 16 + action) as u32
}

/// Dense logits table: one row per (slot, signature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTable {
    rows: Vec<Vec<f64>>,
}

impl ParamTable {
    fn zeros() -> Self {
        let mut rows = Vec::with_capacity(N_SLOTS * N_SIGS);
        for _sig in 0..N_SIGS {
            for arity in SLOT_ARITY {
                rows.push(vec![0.0; arity]);
            }
        }
        Self { rows }
    }

    fn index(slot: usize, sig: usize) -> usize {
        sig * N_SLOTS + slot
    }

    fn row(&self, slot: usize, sig: usize) -> &[f64] {
        &self.rows[Self::index(slot, sig)]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row_arity(&self, row: usize) -> usize {
        self.rows[row].len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.rows[row][col] = value;
    }
}

/// Accumulated parameter gradient, same shape as the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    rows: Vec<Vec<f64>>,
}

impl ParamGradient {
    pub fn zeros() -> Self {
        let t = ParamTable::zeros();
        Self { rows: t.rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |acc: f64, &v| acc.max(v.abs()))
    }

    /// Frobenius-style check used to reject non-finite updates.
    pub fn is_finite(&self) -> bool {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .all(|v| v.is_finite())
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_z).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if draw < cum {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Tabular softmax policy with snapshots for the sampling-time and
/// reference policies.
#[derive(Debug)]
pub struct ToyPolicy {
    params: ParamTable,
    old: ParamTable,
    reference: ParamTable,
    rng: Mutex<ChaCha8Rng>,
}

/// One scored decoding step, carrying everything the gradient needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredToken {
    pub slot: usize,
    pub sig: usize,
    pub action: usize,
    pub logprob: f64,
    /// Read-out tokens have no parameters behind them.
    pub trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_hash: String,
    params: ParamTable,
    reference: ParamTable,
}

fn config_hash() -> String {
    let descriptor = format!(
        "toy-v1 slots={N_SLOTS} sigs={N_SIGS} arity={SLOT_ARITY:?} keys={N_KEYS} vals={N_VALS}"
    );
    let digest = Sha256::digest(descriptor.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ToyPolicy {
    /// Uniform-initialized policy: all logits zero.
    pub fn new(seed: u64) -> Self {
        let params = ParamTable::zeros();
        Self {
            old: params.clone(),
            reference: params.clone(),
            params,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    /// Randomized logits in [-scale, scale]; used by verification
    /// harnesses that need diverse behavior.
    pub fn with_random_params(seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamTable::zeros();
        for row in &mut params.rows {
            for v in row.iter_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        // distinct snapshots so importance ratios and KL are non-trivial
        let mut old = params.clone();
        for row in &mut old.rows {
            for v in row.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let mut reference = params.clone();
        for row in &mut reference.rows {
            for v in row.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        Self {
            params,
            old,
            reference,
            rng: Mutex::new(rng),
        }
    }

    /// Copy the live parameters into the sampling-time snapshot.
    pub fn sync_old(&mut self) {
        self.old = self.params.clone();
    }

    /// Freeze the live parameters as the reference policy.
    pub fn freeze_reference(&mut self) {
        self.reference = self.params.clone();
    }

    pub fn params(&self) -> &ParamTable {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamTable {
        &mut self.params
    }

    fn table(&self, view: PolicyView) -> &ParamTable {
        match view {
            PolicyView::Current => &self.params,
            PolicyView::Old => &self.old,
            PolicyView::Reference => &self.reference,
        }
    }

    fn qa_logits(ctx: &ToyContext) -> Vec<f64> {
        let mut logits = vec![0.0; QA_ARITY];
        match ctx.pair_val {
            Some(v) if ctx.kind != PromptKind::ClosedBook => logits[v] = READOUT_LOGIT,
            _ => logits[N_VALS] = READOUT_LOGIT,
        }
        logits
    }

    fn slot_logits(&self, view: PolicyView, slot: usize, ctx: &ToyContext) -> Vec<f64> {
        if slot == QA_SLOT {
            Self::qa_logits(ctx)
        } else {
            self.table(view).row(slot, ctx.signature()).to_vec()
        }
    }

    fn decode_slots(kind: PromptKind) -> Vec<usize> {
        match kind {
            PromptKind::Extraction => (0..N_SLOTS).collect(),
            _ => vec![QA_SLOT],
        }
    }

    /// Sample one response; returns (text, scored tokens, finish reason).
    fn sample_once(
        &self,
        ctx: &ToyContext,
        request: &GenerationRequest,
        rng: &mut ChaCha8Rng,
    ) -> (String, Vec<ScoredToken>, FinishReason) {
        let slots = Self::decode_slots(ctx.kind);
        let mut pieces: Vec<String> = Vec::new();
        let mut tokens = Vec::new();
        let mut finish = FinishReason::Stop;
        for (emitted, &slot) in slots.iter().enumerate() {
            if emitted >= request.max_new_tokens {
                finish = FinishReason::Length;
                break;
            }
            let logits = self.slot_logits(PolicyView::Current, slot, ctx);
            let action = if request.temperature == 0.0 {
                argmax(&logits)
            } else {
                let tempered: Vec<f64> = logits.iter().map(|l| l / request.temperature).collect();
                sample_index(&softmax(&tempered), rng)
            };
            let logprob = log_softmax(&logits)[action];
            tokens.push(ScoredToken {
                slot,
                sig: ctx.signature(),
                action,
                logprob,
                trainable: slot != QA_SLOT,
            });
            let render = render_action(slot, action, ctx);
            if !render.is_empty() {
                pieces.push(render);
            }
            let text_so_far = pieces.join(" ");
            if let Some(cut) = request
                .stop_sequences
                .iter()
                .filter_map(|s| text_so_far.find(s.as_str()).map(|p| p + s.len()))
                .min()
            {
                let mut text = text_so_far;
                text.truncate(cut);
                return (text, tokens, FinishReason::Stop);
            }
        }
        (pieces.join(" "), tokens, finish)
    }

    /// Greedy tokenization of a completion back into slot actions.
    fn tokenize(
        &self,
        ctx: &ToyContext,
        completion: &str,
    ) -> Result<Vec<(usize, usize)>, BackendError> {
        let words: Vec<&str> = completion.split_whitespace().collect();
        let slots = Self::decode_slots(ctx.kind);
        let mut pos = 0;
        let mut actions = Vec::new();
        for &slot in &slots {
            if pos >= words.len() {
                break;
            }
            let arity = if slot == QA_SLOT {
                QA_ARITY
            } else {
                SLOT_ARITY[slot]
            };
            // longest render first so nested prefixes resolve correctly
            let mut candidates: Vec<(usize, Vec<String>)> = (0..arity)
                .map(|a| {
                    let render = render_action(slot, a, ctx);
                    let ws = render
                        .split_whitespace()
                        .map(str::to_owned)
                        .collect::<Vec<_>>();
                    (a, ws)
                })
                .collect();
            candidates.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
            let mut matched = None;
            for (action, render_words) in &candidates {
                if render_words.len() <= words.len() - pos
                    && render_words.iter().zip(&words[pos..]).all(|(a, b)| a == b)
                {
                    matched = Some((*action, render_words.len()));
                    break;
                }
            }
            match matched {
                Some((action, consumed)) => {
                    actions.push((slot, action));
                    pos += consumed;
                }
                None => {
                    return Err(BackendError::MalformedCompletion(format!(
                        "no action of slot {slot} matches at word {pos}"
                    )))
                }
            }
        }
        if pos < words.len() {
            return Err(BackendError::MalformedCompletion(format!(
                "{} trailing words left unconsumed",
                words.len() - pos
            )));
        }
        Ok(actions)
    }

    /// Teacher-forced scoring with full decoding detail.
    pub fn score_tokens(
        &self,
        view: PolicyView,
        prompt: &str,
        completion: &str,
    ) -> Result<Vec<ScoredToken>, BackendError> {
        let ctx = parse_context(prompt);
        let actions = self.tokenize(&ctx, completion)?;
        Ok(actions
            .into_iter()
            .map(|(slot, action)| {
                let logits = self.slot_logits(view, slot, &ctx);
                ScoredToken {
                    slot,
                    sig: ctx.signature(),
                    action,
                    logprob: log_softmax(&logits)[action],
                    trainable: slot != QA_SLOT,
                }
            })
            .collect())
    }

    /// Chain dJ/dlogp coefficients through the log-softmax into the logits
    /// table. Read-out tokens contribute nothing.
    pub fn accumulate_gradient(
        &self,
        prompt: &str,
        tokens: &[ScoredToken],
        coeffs: &[f64],
        grad: &mut ParamGradient,
    ) {
        debug_assert_eq!(tokens.len(), coeffs.len());
        let ctx = parse_context(prompt);
        for (tok, &c) in tokens.iter().zip(coeffs) {
            if !tok.trainable || c == 0.0 {
                continue;
            }
            let row_idx = ParamTable::index(tok.slot, ctx.signature());
            let probs = softmax(self.params.row(tok.slot, ctx.signature()));
            let row = &mut grad.rows[row_idx];
            for (b, p) in probs.iter().enumerate() {
                let indicator = if b == tok.action { 1.0 } else { 0.0 };
                row[b] += c * (indicator - p);
            }
        }
    }

    /// Gradient-ascent step on the logits. Snapshots are untouched.
    pub fn apply_gradient(
        &mut self,
        grad: &ParamGradient,
        learning_rate: f64,
    ) -> Result<(), BackendError> {
        if !grad.is_finite() {
            return Err(BackendError::InvalidRequest(
                "non-finite gradient".to_string(),
            ));
        }
        for (row, grow) in self.params.rows.iter_mut().zip(&grad.rows) {
            for (v, g) in row.iter_mut().zip(grow) {
                *v += learning_rate * g;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        let ckpt = Checkpoint {
            version: 1,
            config_hash: config_hash(),
            params: self.params.clone(),
            reference: self.reference.clone(),
        };
        std::fs::write(
            path,
            serde_json::to_string(&ckpt).expect("checkpoint serialization"),
        )
    }

    pub fn load(path: &Path, seed: u64) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidRequest(format!("cannot read checkpoint: {e}")))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| BackendError::MalformedReply(format!("bad checkpoint: {e}")))?;
        if ckpt.version != 1 {
            return Err(BackendError::InvalidRequest(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        if ckpt.config_hash != config_hash() {
            return Err(BackendError::InvalidRequest(
                "checkpoint config hash does not match this build".to_string(),
            ));
        }
        Ok(Self {
            old: ckpt.params.clone(),
            params: ckpt.params,
            reference: ckpt.reference,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }
}

impl GenerationBackend for ToyPolicy {
    fn name(&self) -> &str {
        "toy"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>, BackendError> {
        request.validate()?;
        let ctx = parse_context(&request.prompt);
        let mut rng = self.rng.lock().expect("rng poisoned");
        let mut out = Vec::with_capacity(request.num_samples);
        for _ in 0..request.num_samples {
            let (text, tokens, finish_reason) = self.sample_once(&ctx, request, &mut rng);
            out.push(GenerationResult {
                text,
                token_ids: tokens.iter().map(|t| token_id(t.slot, t.action)).collect(),
                token_logprobs: if request.return_logprobs {
                    tokens.iter().map(|t| t.logprob).collect()
                } else {
                    Vec::new()
                },
                finish_reason,
            });
        }
        Ok(out)
    }

    fn score(&self, prompt: &str, completion: &str) -> Result<Vec<f64>, BackendError> {
        self.score_under(PolicyView::Current, prompt, completion)
    }

    fn score_under(
        &self,
        view: PolicyView,
        prompt: &str,
        completion: &str,
    ) -> Result<Vec<f64>, BackendError> {
        Ok(self
            .score_tokens(view, prompt, completion)?
            .into_iter()
            .map(|t| t.logprob)
            .collect())
    }
}

fn filler_words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| P_FILLER[rng.random_range(0..P_FILLER.len())].to_string())
        .collect()
}

/// Generate the synthetic extraction task: each instance asks for the
/// value paired with a key, exactly one passage carries the fact pair, and
/// one other passage carries a decoy pair under a different key.
pub fn toy_instances(n: usize, split: Split, seed: u64) -> Vec<QAInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let key = rng.random_range(0..N_KEYS);
            let val = rng.random_range(0..N_VALS);
            let fact_pos = rng.random_range(0..TOY_PASSAGES);
            let mut decoy_pos = rng.random_range(0..TOY_PASSAGES);
            while decoy_pos == fact_pos {
                decoy_pos = rng.random_range(0..TOY_PASSAGES);
            }
            let mut decoy_key = rng.random_range(0..N_KEYS);
            while decoy_key == key {
                decoy_key = rng.random_range(0..N_KEYS);
            }
            let decoy_val = rng.random_range(0..N_VALS);

            let passages = (0..TOY_PASSAGES)
                .map(|p| {
                    let mut words = filler_words(&mut rng, 8);
                    if p == fact_pos {
                        let at = rng.random_range(0..=words.len());
                        words.insert(at, val_word(val));
                        words.insert(at, key_word(key));
                    } else if p == decoy_pos {
                        let at = rng.random_range(0..=words.len());
                        words.insert(at, val_word(decoy_val));
                        words.insert(at, key_word(decoy_key));
                    }
                    Passage {
                        doc_id: format!("toy-{split}-{i}-p{}", p + 1),
                        title: format!("card {:02}", p + 1),
                        body: words.join(" "),
                        rank: p + 1,
                    }
                })
                .collect();

            QAInstance {
                id: format!("toy-{split}-{i:04}"),
                question: format!("which val follows {}", key_word(key)),
                gold_answers: vec![val_word(val)],
                passages,
                split,
            }
        })
        .collect()
}

/// Irrelevant passages (pure filler, no fact pairs) for noise injection.
pub fn toy_noise_pool(n: usize, seed: u64) -> Vec<Passage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Passage {
            doc_id: format!("toy-noise-{i}"),
            title: format!("scrap {i:02}"),
            body: filler_words(&mut rng, 10).join(" "),
            rank: 1,
        })
        .collect()
}
