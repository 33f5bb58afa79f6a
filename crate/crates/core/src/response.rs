//! Parsing of tagged extractor responses into rationale / evidence /
//! answer segments, and the well-formedness predicate behind the format
//! reward.
//!
//! Parsing is total: malformed input produces absent segments and
//! `well_formed = false`, never an error. Tag matching is literal and
//! case-sensitive.

pub const REASON_OPEN: &str = "<reason>";
pub const REASON_CLOSE: &str = "</reason>";
pub const EXTRACT_OPEN: &str = "<extract>";
pub const EXTRACT_CLOSE: &str = "</extract>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Decoding stop token for deployment-time evidence extraction: generation
/// is terminated once this token appears.
pub const EXTRACT_STOP_TOKEN: &str = EXTRACT_CLOSE;

/// One extracted segment: the text strictly between a matched tag pair,
/// with its byte span in the raw response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    /// Byte offset of the segment text (after the opening tag).
    pub start: usize,
    /// Byte offset one past the segment text (before the closing tag).
    pub end: usize,
}

impl Segment {
    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// A policy response decomposed into its tagged segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub raw: String,
    pub rationale: Option<Segment>,
    pub evidence: Option<Segment>,
    pub answer: Option<Segment>,
    pub well_formed: bool,
}

impl ParsedResponse {
    pub fn rationale_text(&self) -> &str {
        self.rationale.as_ref().map_or("", |s| s.as_str())
    }

    pub fn evidence_text(&self) -> &str {
        self.evidence.as_ref().map_or("", |s| s.as_str())
    }

    pub fn answer_text(&self) -> &str {
        self.answer.as_ref().map_or("", |s| s.as_str())
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    haystack.match_indices(needle).count()
}

/// First matched pair: the first opener, paired with the first closer that
/// follows it. Returns the inner segment, or None when no such pair exists.
fn first_pair(raw: &str, open: &str, close: &str) -> Option<Segment> {
    let open_at = raw.find(open)?;
    let inner_start = open_at + open.len();
    let close_rel = raw[inner_start..].find(close)?;
    let inner_end = inner_start + close_rel;
    Some(Segment {
        text: raw[inner_start..inner_end].to_string(),
        start: inner_start,
        end: inner_end,
    })
}

/// Parse a raw response into segments and decide well-formedness.
///
/// Well-formed means: each of the three tag kinds is opened and closed
/// exactly once, each opener precedes its closer, and the pairs appear in
/// the order reason -> extract -> answer without overlapping. Text outside
/// the tags is ignored for rewards but preserved in `raw`.
pub fn parse_response(raw: &str) -> ParsedResponse {
    let rationale = first_pair(raw, REASON_OPEN, REASON_CLOSE);
    let evidence = first_pair(raw, EXTRACT_OPEN, EXTRACT_CLOSE);
    let answer = first_pair(raw, ANSWER_OPEN, ANSWER_CLOSE);

    let exactly_once = [
        (REASON_OPEN, REASON_CLOSE),
        (EXTRACT_OPEN, EXTRACT_CLOSE),
        (ANSWER_OPEN, ANSWER_CLOSE),
    ]
    .iter()
    .all(|(o, c)| count_occurrences(raw, o) == 1 && count_occurrences(raw, c) == 1);

    let well_formed = exactly_once
        && match (&rationale, &evidence, &answer) {
            (Some(r), Some(e), Some(a)) => {
                // pair ends (inner end + closer) must precede the next opener
                let r_close_end = r.end + REASON_CLOSE.len();
                let e_open_start = e.start - EXTRACT_OPEN.len();
                let e_close_end = e.end + EXTRACT_CLOSE.len();
                let a_open_start = a.start - ANSWER_OPEN.len();
                r_close_end <= e_open_start && e_close_end <= a_open_start
            }
            _ => false,
        };

    ParsedResponse {
        raw: raw.to_string(),
        rationale,
        evidence,
        answer,
        well_formed,
    }
}

/// The format predicate of the format reward: true iff the response parses
/// as well-formed.
pub fn check_format(raw: &str) -> bool {
    parse_response(raw).well_formed
}
