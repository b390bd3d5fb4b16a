//! Deterministic offline backends.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    prompt_hash, split_trace_answer, CompletionRequest, GenerationRecord, NoisyBase, ProviderError,
};
use crate::parser::whitespace_tokens;
use crate::prompt::{HybridPrompt, FORECAST_CLOSE, FORECAST_OPEN};
use crate::stats;

/// Tiles the last `period` values cyclically to `horizon` steps.
pub fn seasonal_naive_forecast(lookback: &[f64], period: usize, horizon: usize) -> Vec<f64> {
    if lookback.is_empty() {
        return vec![0.0; horizon];
    }
    let period = period.clamp(1, lookback.len());
    let cycle = &lookback[lookback.len() - period..];
    cycle.iter().copied().cycle().take(horizon).collect()
}

/// Extends the least-squares line through the lookback `horizon` steps.
pub fn linear_trend_forecast(lookback: &[f64], horizon: usize) -> Vec<f64> {
    let (slope, intercept) = stats::least_squares_line(lookback);
    let n = lookback.len();
    (0..horizon)
        .map(|h| intercept + slope * (n + h) as f64)
        .collect()
}

/// Prompt-scale lookback with placeholders filled from the nearest earlier
/// observation (or the first observation for a leading gap).
fn prompt_values(prompt: &HybridPrompt) -> Vec<f64> {
    let first = prompt.series.iter().find_map(|p| p.value).unwrap_or(0.0);
    let mut last = first;
    prompt
        .series
        .iter()
        .map(|p| {
            if let Some(v) = p.value {
                last = v;
            }
            last
        })
        .collect()
}

fn render_forecast(values: &[f64]) -> String {
    let body: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("{FORECAST_OPEN}{}{FORECAST_CLOSE}", body.join(", "))
}

fn record_from_response(prompt: &HybridPrompt, response: &str, label: &str) -> GenerationRecord {
    let (trace, answer) = split_trace_answer(response);
    GenerationRecord {
        trace_text: trace.to_string(),
        answer_text: answer.to_string(),
        prompt_tokens: whitespace_tokens(&prompt.text()),
        completion_tokens: whitespace_tokens(response),
        reasoning_tokens: None,
        usage_reported: false,
        latency_ms: 0,
        provider_label: label.to_string(),
        cache_hit: false,
    }
}

pub(super) fn seasonal_naive_record(
    prompt: &HybridPrompt,
    period: usize,
    label: &str,
) -> GenerationRecord {
    let forecast = seasonal_naive_forecast(&prompt_values(prompt), period, prompt.horizon);
    let response = format!(
        "The series repeats with a period of {period} steps, so the forecast repeats the most \
         recent cycle.\n{}",
        render_forecast(&forecast)
    );
    record_from_response(prompt, &response, label)
}

/// Seed derived from the configured seed, the prompt and the generation index.
fn noise_seed(seed: u64, prompt: &HybridPrompt, generation: u32) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(prompt_hash(prompt).as_bytes())
        .chain_update(generation.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub(super) fn noisy_record(
    request: CompletionRequest<'_>,
    base: NoisyBase,
    sigma: f64,
    seed: u64,
    label: &str,
) -> GenerationRecord {
    let prompt = request.prompt;
    let lookback = prompt_values(prompt);
    let (mut forecast, description) = match base {
        NoisyBase::SeasonalNaive { period } => (
            seasonal_naive_forecast(&lookback, period, prompt.horizon),
            format!("a seasonal cycle of {period} steps"),
        ),
        NoisyBase::LinearTrend => (
            linear_trend_forecast(&lookback, prompt.horizon),
            "a linear trend".to_string(),
        ),
    };
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, prompt, request.generation));
        let noise = Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative");
        for v in &mut forecast {
            *v += noise.sample(&mut rng);
        }
    }
    let response = format!(
        "The history is consistent with {description}; sampling one plausible continuation.\n{}",
        render_forecast(&forecast)
    );
    record_from_response(prompt, &response, label)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScriptedResponse {
    Text(String),
    Full {
        content: String,
        #[serde(default)]
        reasoning_content: Option<String>,
        #[serde(default)]
        prompt_tokens: Option<u64>,
        #[serde(default)]
        completion_tokens: Option<u64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScriptedEntry {
    One(ScriptedResponse),
    /// Indexed by generation, wrapping around.
    PerGeneration(Vec<ScriptedResponse>),
}

/// Canned responses keyed by prompt hash.
///
/// Lookup order for a request with hash `h`, generation `g` and `n` prior
/// re-prompts: `h#retry{n}` (only when `n > 0`), `h`, then the same two keys
/// with `*` in place of `h`. An array value is indexed by `g` modulo its length.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct ScriptedFixture {
    entries: HashMap<String, ScriptedEntry>,
}

impl ScriptedFixture {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let unreadable = |reason: String| ProviderError::FixtureUnreadable {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn lookup(&self, hash: &str, retry: usize, generation: u32) -> Option<&ScriptedResponse> {
        let mut keys = Vec::with_capacity(4);
        for base in [hash, "*"] {
            if retry > 0 {
                keys.push(format!("{base}#retry{retry}"));
            }
            keys.push(base.to_string());
        }
        let entry = keys.iter().find_map(|k| self.entries.get(k))?;
        match entry {
            ScriptedEntry::One(r) => Some(r),
            ScriptedEntry::PerGeneration(list) if !list.is_empty() => {
                Some(&list[generation as usize % list.len()])
            }
            ScriptedEntry::PerGeneration(_) => None,
        }
    }

    pub(super) fn replay(
        &self,
        request: CompletionRequest<'_>,
        label: &str,
    ) -> Result<GenerationRecord, ProviderError> {
        let hash = prompt_hash(request.prompt);
        let response = self
            .lookup(&hash, request.follow_ups.len(), request.generation)
            .ok_or_else(|| ProviderError::FixtureMiss(hash.clone()))?;
        Ok(match response {
            ScriptedResponse::Text(text) => record_from_response(request.prompt, text, label),
            ScriptedResponse::Full {
                content,
                reasoning_content,
                prompt_tokens,
                completion_tokens,
            } => {
                let (before, answer) = split_trace_answer(content);
                let trace = format!("{}{before}", reasoning_content.as_deref().unwrap_or(""));
                let estimated = whitespace_tokens(&trace) + whitespace_tokens(answer);
                GenerationRecord {
                    trace_text: trace,
                    answer_text: answer.to_string(),
                    prompt_tokens: prompt_tokens
                        .unwrap_or_else(|| whitespace_tokens(&request.prompt.text())),
                    completion_tokens: completion_tokens.unwrap_or(estimated),
                    reasoning_tokens: None,
                    usage_reported: completion_tokens.is_some(),
                    latency_ms: 0,
                    provider_label: label.to_string(),
                    cache_hit: false,
                }
            }
        })
    }
}
