//! Extraction of numeric forecasts from free-form model output.
//!
//! The happy path reads the last `<FORECAST>...</FORECAST>` block. When that
//! fails, [`parse_with_repair`] applies a bounded repair policy: a fallback
//! scan for a long run of comma-separated numbers, truncation of overlong
//! answers, and finally corrective re-prompts.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{FORECAST_CLOSE, FORECAST_OPEN};
use crate::provider::GenerationRecord;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("answer block not found")]
    BlockNotFound,
    #[error("answer markers are unbalanced")]
    UnbalancedMarkers,
    #[error("expected {expected} values, found {found}")]
    WrongLength { found: usize, expected: usize },
    #[error("token {token:?} at position {position} is not a number")]
    NonNumericToken { token: String, position: usize },
    #[error("value at position {position} is not finite")]
    NonFinite { position: usize },
}

/// Terminal parse failure, carrying the raw response for post-mortem.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("could not parse a forecast after {attempts} attempt(s): {last_error}")]
pub struct ParseFailure {
    pub raw: String,
    pub last_error: ParseError,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum RepairError<E> {
    #[error(transparent)]
    Parse(ParseFailure),
    #[error("corrective re-prompt failed: {0}")]
    Reprompt(E),
}

/// A validated forecast of exactly `H` finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub values: Vec<f64>,
    /// Byte range of the parsed text within the response it came from.
    pub source_span: Range<usize>,
    pub repairs_applied: Vec<String>,
}

/// Returns the content of the last well-formed `open ... close` pair along
/// with its byte range.
pub fn extract_answer_block<'a>(
    text: &'a str,
    open: &str,
    close: &str,
) -> Result<(&'a str, Range<usize>), ParseError> {
    debug_assert!(!open.is_empty() && !close.is_empty() && open != close);
    let mut search_end = text.len();
    while let Some(close_at) = text[..search_end].rfind(close) {
        if let Some(open_at) = text[..close_at].rfind(open) {
            let start = open_at + open.len();
            return Ok((&text[start..close_at], start..close_at));
        }
        search_end = close_at;
    }
    if text.contains(open) || text.contains(close) {
        Err(ParseError::UnbalancedMarkers)
    } else {
        Err(ParseError::BlockNotFound)
    }
}

/// Splits block text into numbers without checking the count.
pub fn parse_values(block: &str) -> Result<Vec<f64>, ParseError> {
    let mut body = block.trim();
    if let Some(inner) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
        body = inner;
    }
    let mut values = Vec::new();
    for token in body
        .split([',', '\n'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
    {
        let position = values.len();
        let value: f64 = token.parse().map_err(|_| ParseError::NonNumericToken {
            token: token.to_string(),
            position,
        })?;
        if !value.is_finite() {
            return Err(ParseError::NonFinite { position });
        }
        values.push(value);
    }
    Ok(values)
}

/// Parses exactly `horizon` numbers from block text.
pub fn parse_forecast(block: &str, horizon: usize) -> Result<ParsedAnswer, ParseError> {
    let values = parse_values(block)?;
    if values.len() != horizon {
        return Err(ParseError::WrongLength {
            found: values.len(),
            expected: horizon,
        });
    }
    Ok(ParsedAnswer {
        values,
        source_span: 0..block.len(),
        repairs_applied: Vec::new(),
    })
}

static NUMERIC_RUN: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";
    Regex::new(&format!(r"(?:^|[^\w.])({num}(?:[ \t]*,\s*{num})*)")).expect("valid regex")
});

/// Finds the last run of comma-separated numbers with at least `min_len` entries.
fn last_numeric_run(text: &str, min_len: usize) -> Option<(Vec<f64>, Range<usize>)> {
    NUMERIC_RUN
        .captures_iter(text)
        .filter_map(|c| c.get(1))
        .filter_map(|m| {
            let values = parse_values(m.as_str()).ok()?;
            (values.len() >= min_len).then(|| (values, m.range()))
        })
        .last()
}

/// Wording of the corrective instruction sent when an answer is unusable.
pub fn corrective_instruction(found: usize, horizon: usize) -> String {
    format!(
        "Your previous answer had {found} values; output exactly {horizon} values inside \
         {FORECAST_OPEN}...{FORECAST_CLOSE} and nothing else."
    )
}

enum Attempt {
    Done(ParsedAnswer),
    Retry { found: usize, error: ParseError },
}

fn attempt(raw: &str, horizon: usize) -> Attempt {
    let (candidate, span, mut repairs) =
        match extract_answer_block(raw, FORECAST_OPEN, FORECAST_CLOSE) {
            Ok((block, span)) => match parse_values(block) {
                Ok(values) => (values, span, Vec::new()),
                Err(error) => return Attempt::Retry { found: 0, error },
            },
            Err(ParseError::BlockNotFound) => {
                let min_len = horizon.div_ceil(2).max(1);
                match last_numeric_run(raw, min_len) {
                    Some((values, span)) => (values, span, vec!["fallback_scan".to_string()]),
                    None => {
                        return Attempt::Retry {
                            found: 0,
                            error: ParseError::BlockNotFound,
                        }
                    }
                }
            }
            Err(error) => return Attempt::Retry { found: 0, error },
        };
    let found = candidate.len();
    if found < horizon {
        return Attempt::Retry {
            found,
            error: ParseError::WrongLength {
                found,
                expected: horizon,
            },
        };
    }
    let mut values = candidate;
    if found > horizon {
        values.truncate(horizon);
        repairs.push("truncated".to_string());
    }
    Attempt::Done(ParsedAnswer {
        values,
        source_span: span,
        repairs_applied: repairs,
    })
}

/// Parses a response, repairing or re-prompting when needed.
///
/// `reprompt` receives the corrective instruction and returns the next raw
/// response. Overlong answers are truncated; short or missing answers trigger
/// up to `max_retries` re-prompts.
pub fn parse_with_repair<F, E>(
    raw_response: &str,
    horizon: usize,
    max_retries: u32,
    mut reprompt: F,
) -> Result<ParsedAnswer, RepairError<E>>
where
    F: FnMut(&str) -> Result<String, E>,
{
    let mut raw = raw_response.to_string();
    let mut retries = 0;
    loop {
        match attempt(&raw, horizon) {
            Attempt::Done(mut parsed) => {
                if retries > 0 {
                    parsed
                        .repairs_applied
                        .insert(0, format!("reprompted:{retries}"));
                }
                return Ok(parsed);
            }
            Attempt::Retry { found, error } => {
                if retries >= max_retries {
                    return Err(RepairError::Parse(ParseFailure {
                        raw,
                        last_error: error,
                        attempts: retries + 1,
                    }));
                }
                retries += 1;
                raw = reprompt(&corrective_instruction(found, horizon))
                    .map_err(RepairError::Reprompt)?;
            }
        }
    }
}

/// Number of whitespace-delimited tokens.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Length of the reasoning trace in tokens.
///
/// Prefers a backend-reported reasoning count, then completion usage minus a
/// whitespace estimate of the answer, then a whitespace count of the trace.
pub fn trace_token_count(record: &GenerationRecord) -> u64 {
    if let Some(reasoning) = record.reasoning_tokens {
        return reasoning;
    }
    if record.usage_reported {
        return record
            .completion_tokens
            .saturating_sub(whitespace_tokens(&record.answer_text));
    }
    whitespace_tokens(&record.trace_text)
}
