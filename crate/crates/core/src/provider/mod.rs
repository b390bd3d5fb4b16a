//! Completion backends.
//!
//! [`Gateway`] dispatches a prompt to either an OpenAI-style chat-completions
//! endpoint or one of the deterministic local mocks, applying per-provider
//! rate limiting and an optional content-addressed response cache.

mod cache;
mod http;
mod mock;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{cache_key, CacheLookup};
pub use mock::{linear_trend_forecast, seasonal_naive_forecast, ScriptedFixture};

use crate::prompt::{HybridPrompt, FORECAST_OPEN};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("environment variable `{0}` holding the API key is unset or empty")]
    AuthMissing(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited; gave up after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("upstream returned status {status}: {excerpt}")]
    UpstreamError { status: u16, excerpt: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no scripted response for prompt hash {0}")]
    FixtureMiss(String),
    #[error("cannot load fixture {path}: {reason}")]
    FixtureUnreadable { path: String, reason: String },
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
    #[error("cache I/O failure: {0}")]
    CacheIo(String),
}

/// Base forecaster behind the noisy mock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisyBase {
    /// Tiles the last `period` values.
    SeasonalNaive { period: usize },
    /// Extrapolates the least-squares line through the lookback.
    LinearTrend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    MockSeasonalNaive {
        period: usize,
    },
    MockNoisy {
        base: NoisyBase,
        sigma: f64,
        seed: u64,
    },
    MockScripted {
        fixture: PathBuf,
    },
}

/// A configured completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    #[serde(flatten)]
    pub kind: ProviderKind,
    /// Full chat-completions URL, e.g. `https://api.deepseek.com/chat/completions`.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    /// Environment variable holding the bearer token. No header is sent when absent.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub min_request_interval_ms: u64,
    /// First retry delay; doubles per attempt with ±20% jitter, capped at 60s.
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_timeout() -> u64 {
    600
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    1000
}

impl ProviderSpec {
    pub fn new(kind: ProviderKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model_name: None,
            auth_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            min_request_interval_ms: 0,
            backoff_base_ms: default_backoff(),
            label: None,
        }
    }

    pub fn seasonal_naive(period: usize) -> Self {
        Self::new(ProviderKind::MockSeasonalNaive { period })
    }

    pub fn noisy(base: NoisyBase, sigma: f64, seed: u64) -> Self {
        Self::new(ProviderKind::MockNoisy { base, sigma, seed })
    }

    pub fn scripted(fixture: impl Into<PathBuf>) -> Self {
        Self::new(ProviderKind::MockScripted {
            fixture: fixture.into(),
        })
    }

    pub fn http_chat(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        auth_env_var: impl Into<String>,
    ) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            model_name: Some(model.into()),
            auth_env_var: Some(auth_env_var.into()),
            ..Self::new(ProviderKind::HttpChat)
        }
    }

    /// Stable label that distinguishes every behaviourally different spec.
    pub fn label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match &self.kind {
            ProviderKind::HttpChat => format!(
                "http:{}@{}",
                self.model_name.as_deref().unwrap_or("?"),
                self.endpoint.as_deref().unwrap_or("?")
            ),
            ProviderKind::MockSeasonalNaive { period } => format!("mock_seasonal_naive({period})"),
            ProviderKind::MockNoisy { base, sigma, seed } => {
                let base = match base {
                    NoisyBase::SeasonalNaive { period } => format!("seasonal_naive({period})"),
                    NoisyBase::LinearTrend => "linear_trend".to_string(),
                };
                format!("mock_noisy({base},sigma={sigma},seed={seed})")
            }
            ProviderKind::MockScripted { fixture } => {
                format!("mock_scripted({})", fixture.display())
            }
        }
    }

    pub fn is_mock(&self) -> bool {
        !matches!(self.kind, ProviderKind::HttpChat)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        match &self.kind {
            ProviderKind::HttpChat => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(ProviderError::InvalidSpec(
                        "http_chat needs an endpoint".into(),
                    ));
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return Err(ProviderError::InvalidSpec(
                        "http_chat needs a model_name".into(),
                    ));
                }
            }
            ProviderKind::MockSeasonalNaive { period } if *period == 0 => {
                return Err(ProviderError::InvalidSpec("period must be positive".into()));
            }
            ProviderKind::MockNoisy { base, sigma, .. } => {
                if !(*sigma >= 0.0) {
                    return Err(ProviderError::InvalidSpec(
                        "sigma must be non-negative".into(),
                    ));
                }
                if matches!(base, NoisyBase::SeasonalNaive { period: 0 }) {
                    return Err(ProviderError::InvalidSpec("period must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Decoding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_temperature() -> f64 {
    0.6
}

fn default_top_p() -> f64 {
    0.7
}

fn default_max_tokens() -> u32 {
    8192
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            top_p: default_top_p(),
            max_tokens: default_max_tokens(),
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::InvalidSpec(
                "temperature must be >= 0".into(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ProviderError::InvalidSpec("top_p must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Result of one provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub trace_text: String,
    pub answer_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Reasoning tokens when the backend reports them separately.
    #[serde(default)]
    pub reasoning_tokens: Option<u64>,
    /// Whether token counts came from the backend rather than an estimate.
    #[serde(default)]
    pub usage_reported: bool,
    pub latency_ms: u64,
    pub provider_label: String,
    pub cache_hit: bool,
}

impl GenerationRecord {
    /// The full response; trace and answer partition it.
    pub fn raw_response(&self) -> String {
        format!("{}{}", self.trace_text, self.answer_text)
    }
}

/// Splits a response at its last `<FORECAST>` marker.
pub fn split_trace_answer(response: &str) -> (&str, &str) {
    match response.rfind(FORECAST_OPEN) {
        Some(at) => response.split_at(at),
        None => (response, ""),
    }
}

/// One earlier exchange appended after the prompt when re-prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUp {
    pub assistant: String,
    pub user: String,
}

/// A prompt plus the conversation state needed to dispatch it.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a HybridPrompt,
    /// Index of the independent generation (0-based).
    pub generation: u32,
    pub follow_ups: &'a [FollowUp],
}

impl<'a> CompletionRequest<'a> {
    pub fn new(prompt: &'a HybridPrompt, generation: u32) -> Self {
        Self {
            prompt,
            generation,
            follow_ups: &[],
        }
    }
}

/// Hex SHA-256 of the prompt text.
pub fn prompt_hash(prompt: &HybridPrompt) -> String {
    hex::encode(Sha256::digest(prompt.text().as_bytes()))
}

/// Serializes dispatch times for one provider.
#[derive(Debug)]
struct RateGate {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateGate {
    fn wait_turn(&self) {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let ready = prev + self.min_interval;
            let now = Instant::now();
            if ready > now {
                std::thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Counters for run manifests.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub cache_hits: u64,
}

/// Shared entry point for all provider calls. Safe to use from many threads.
#[derive(Debug, Default)]
pub struct Gateway {
    cache_dir: Option<PathBuf>,
    client: http::ClientSlot,
    gates: Mutex<HashMap<String, Arc<RateGate>>>,
    fixtures: Mutex<HashMap<PathBuf, Arc<ScriptedFixture>>>,
    requests: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    /// A gateway whose [`Gateway::dispatch`] goes through the response cache.
    pub fn with_cache(dir: impl Into<PathBuf>) -> Self {
        Self {
            cache_dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache_dir.as_deref()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    /// Calls the backend, using the cache when one is configured.
    pub fn dispatch(
        &self,
        request: CompletionRequest<'_>,
        sampling: &SamplingParams,
        provider: &ProviderSpec,
    ) -> Result<GenerationRecord, ProviderError> {
        match &self.cache_dir {
            Some(dir) => self.cached_complete(request, sampling, provider, dir),
            None => self.complete(request, sampling, provider),
        }
    }

    /// Calls the backend directly.
    pub fn complete(
        &self,
        request: CompletionRequest<'_>,
        sampling: &SamplingParams,
        provider: &ProviderSpec,
    ) -> Result<GenerationRecord, ProviderError> {
        provider.validate()?;
        self.requests.fetch_add(1, Ordering::Relaxed);
        match &provider.kind {
            ProviderKind::HttpChat => {
                let gate = self.gate(provider);
                http::complete(&self.client, &gate, request, sampling, provider)
            }
            ProviderKind::MockSeasonalNaive { period } => Ok(mock::seasonal_naive_record(
                request.prompt,
                *period,
                &provider.label(),
            )),
            ProviderKind::MockNoisy { base, sigma, seed } => Ok(mock::noisy_record(
                request,
                *base,
                *sigma,
                *seed,
                &provider.label(),
            )),
            ProviderKind::MockScripted { fixture } => {
                let fixture = self.fixture(fixture)?;
                fixture.replay(request, &provider.label())
            }
        }
    }

    /// Looks the request up in `cache_dir`, calling the backend on a miss.
    pub fn cached_complete(
        &self,
        request: CompletionRequest<'_>,
        sampling: &SamplingParams,
        provider: &ProviderSpec,
        cache_dir: &Path,
    ) -> Result<GenerationRecord, ProviderError> {
        let key = cache_key(request, sampling, provider);
        match cache::lookup(cache_dir, &key) {
            CacheLookup::Hit(mut record) => {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                record.cache_hit = true;
                return Ok(record);
            }
            CacheLookup::Corrupt(reason) => {
                tracing::warn!(key = %key, %reason, "discarding corrupt cache entry");
            }
            CacheLookup::Miss => {}
        }
        let record = self.complete(request, sampling, provider)?;
        cache::store(cache_dir, &key, &record)?;
        Ok(record)
    }

    fn gate(&self, provider: &ProviderSpec) -> Arc<RateGate> {
        let mut gates = self.gates.lock().unwrap_or_else(|e| e.into_inner());
        gates
            .entry(provider.label())
            .or_insert_with(|| {
                Arc::new(RateGate {
                    min_interval: Duration::from_millis(provider.min_request_interval_ms),
                    last: Mutex::new(None),
                })
            })
            .clone()
    }

    fn fixture(&self, path: &Path) -> Result<Arc<ScriptedFixture>, ProviderError> {
        let mut fixtures = self.fixtures.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(f) = fixtures.get(path) {
            return Ok(f.clone());
        }
        let loaded = Arc::new(ScriptedFixture::load(path)?);
        fixtures.insert(path.to_path_buf(), loaded.clone());
        Ok(loaded)
    }
}
