//! OpenAI-style chat-completions client with retries and backoff.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    split_trace_answer, CompletionRequest, GenerationRecord, ProviderError, ProviderSpec, RateGate,
    SamplingParams,
};

pub(super) type ClientSlot = OnceLock<reqwest::blocking::Client>;

const BACKOFF_CAP: Duration = Duration::from_secs(60);
const EXCERPT_CHARS: usize = 400;

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    stream: bool,
}

#[derive(Debug, Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    reasoning_content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    completion_tokens_details: Option<CompletionDetails>,
}

#[derive(Debug, Deserialize)]
struct CompletionDetails {
    #[serde(default)]
    reasoning_tokens: Option<u64>,
}

/// Delay before retry number `attempt` (0-based): base * 2^attempt, ±20%, capped.
pub(super) fn backoff_delay(base_ms: u64, attempt: u32, jitter: f64) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << attempt.min(30)) as f64;
    let jittered = exp * (1.0 + jitter.clamp(-0.2, 0.2));
    Duration::from_millis(jittered.round() as u64).min(BACKOFF_CAP)
}

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

pub(super) fn complete(
    slot: &ClientSlot,
    gate: &RateGate,
    request: CompletionRequest<'_>,
    sampling: &SamplingParams,
    provider: &ProviderSpec,
) -> Result<GenerationRecord, ProviderError> {
    let endpoint = provider
        .endpoint
        .as_deref()
        .ok_or_else(|| ProviderError::InvalidSpec("missing endpoint".into()))?;
    let model = provider
        .model_name
        .as_deref()
        .ok_or_else(|| ProviderError::InvalidSpec("missing model_name".into()))?;
    let api_key = match &provider.auth_env_var {
        Some(var) => match std::env::var(var) {
            Ok(key) if !key.trim().is_empty() => Some(key),
            _ => return Err(ProviderError::AuthMissing(var.clone())),
        },
        None => None,
    };

    let prompt_text = request.prompt.text();
    let mut messages = vec![Message {
        role: "user",
        content: &prompt_text,
    }];
    for turn in request.follow_ups {
        messages.push(Message {
            role: "assistant",
            content: &turn.assistant,
        });
        messages.push(Message {
            role: "user",
            content: &turn.user,
        });
    }
    let body = ChatRequest {
        model,
        messages,
        temperature: sampling.temperature,
        top_p: sampling.top_p,
        max_tokens: sampling.max_tokens,
        seed: sampling.seed,
        stream: false,
    };

    let client = slot.get_or_init(reqwest::blocking::Client::new);
    let timeout = Duration::from_secs(provider.timeout_secs.max(1));
    let mut attempt = 0u32;
    loop {
        gate.wait_turn();
        let started = Instant::now();
        let mut builder = client.post(endpoint).timeout(timeout).json(&body);
        if let Some(key) = &api_key {
            builder = builder.bearer_auth(key);
        }
        let outcome = builder.send();
        let retryable_error = match outcome {
            Ok(response) => {
                let status = response.status();
                let text = response
                    .text()
                    .map_err(|e| ProviderError::Transport(e.to_string()))?;
                if status.is_success() {
                    let latency_ms = started.elapsed().as_millis() as u64;
                    return parse_response(&text, latency_ms, &provider.label());
                }
                let error = if status.as_u16() == 429 {
                    ProviderError::RateLimited {
                        attempts: attempt + 1,
                    }
                } else {
                    ProviderError::UpstreamError {
                        status: status.as_u16(),
                        excerpt: excerpt(&text),
                    }
                };
                if !(status.as_u16() == 429 || status.is_server_error()) {
                    return Err(error);
                }
                error
            }
            Err(e) if e.is_timeout() => ProviderError::Timeout {
                attempts: attempt + 1,
            },
            Err(e) => ProviderError::Transport(e.to_string()),
        };
        if attempt >= provider.max_retries {
            return Err(retryable_error);
        }
        let jitter = rand::rng().random_range(-0.2..=0.2);
        let delay = backoff_delay(provider.backoff_base_ms, attempt, jitter);
        tracing::debug!(attempt, ?delay, error = %retryable_error, "retrying chat completion");
        std::thread::sleep(delay);
        attempt += 1;
    }
}

fn parse_response(
    body: &str,
    latency_ms: u64,
    label: &str,
) -> Result<GenerationRecord, ProviderError> {
    let malformed = |reason: String| ProviderError::UpstreamError {
        status: 200,
        excerpt: format!("{reason}: {}", excerpt(body)),
    };
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| malformed(format!("malformed body ({e})")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| malformed("no choices".into()))?;
    let content = choice.message.content.unwrap_or_default();
    let (before, answer) = split_trace_answer(&content);
    let trace = format!(
        "{}{before}",
        choice.message.reasoning_content.as_deref().unwrap_or("")
    );
    let (prompt_tokens, completion_tokens, reasoning_tokens, usage_reported) = match parsed.usage {
        Some(u) => (
            u.prompt_tokens,
            u.completion_tokens,
            u.completion_tokens_details.and_then(|d| d.reasoning_tokens),
            true,
        ),
        None => (
            0,
            crate::parser::whitespace_tokens(&trace) + crate::parser::whitespace_tokens(answer),
            None,
            false,
        ),
    };
    Ok(GenerationRecord {
        trace_text: trace,
        answer_text: answer.to_string(),
        prompt_tokens,
        completion_tokens,
        reasoning_tokens,
        usage_reported,
        latency_ms,
        provider_label: label.to_string(),
        cache_hit: false,
    })
}
