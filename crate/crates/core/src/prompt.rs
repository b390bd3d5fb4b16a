//! Hybrid instruction rendering.
//!
//! A prompt combines four parts: a task directive stating the horizon, optional
//! domain context, the lookback series with or without timestamps, and an
//! answer contract asking for a `<FORECAST>...</FORECAST>` block. The
//! ablation transforms (timestamp removal or shifting, context removal,
//! Z-score and per-window instance normalization) are all expressed through
//! [`PromptVariant`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ChannelStats, Frequency, MissingMode, ObservedWindow, MISSING_TOKEN};
use crate::stats;

pub const FORECAST_OPEN: &str = "<FORECAST>";
pub const FORECAST_CLOSE: &str = "</FORECAST>";
pub const DRAFT_OPEN: &str = "<DRAFT>";
pub const DRAFT_CLOSE: &str = "</DRAFT>";

const TIMESTAMP_RENDER: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("timestamp offset of {offset_secs}s is not a multiple of the {frequency} interval")]
    OffsetNotMultipleOfFrequency {
        offset_secs: i64,
        frequency: Frequency,
    },
    #[error("window has zero spread; instance normalization is undefined")]
    DegenerateWindow,
    #[error("z-score normalization requires training statistics with positive std")]
    MissingTrainStats,
    #[error("context is enabled but the domain description is empty")]
    EmptyContext,
    #[error("lookback contains no observed values")]
    EmptyLookback,
    #[error("rendered prompt has {chars} characters, above the {limit} limit")]
    PromptTooLong { chars: usize, limit: usize },
    #[error("malformed context file: {0}")]
    MalformedContext(String),
}

/// Textual context supplied alongside the series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextDescriptor {
    pub domain_text: String,
    pub channel_semantics: BTreeMap<String, String>,
    pub frequency_text: String,
}

impl ContextDescriptor {
    /// Parses a sidecar file with `[domain]`, `[channels]` and `[frequency]`
    /// sections. Channel lines have the form `name: meaning`; `#` starts a
    /// comment line.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut ctx = ContextDescriptor::default();
        let mut section = None::<String>;
        let mut domain = Vec::new();
        let mut frequency = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_ascii_lowercase();
                if !matches!(name.as_str(), "domain" | "channels" | "frequency") {
                    return Err(PromptError::MalformedContext(format!(
                        "unknown section [{name}] on line {}",
                        lineno + 1
                    )));
                }
                section = Some(name);
                continue;
            }
            match section.as_deref() {
                Some("domain") => domain.push(trimmed),
                Some("frequency") => frequency.push(trimmed),
                Some("channels") => {
                    let (name, meaning) = trimmed.split_once(':').ok_or_else(|| {
                        PromptError::MalformedContext(format!(
                            "channel line {} lacks `name: meaning`",
                            lineno + 1
                        ))
                    })?;
                    ctx.channel_semantics
                        .insert(name.trim().to_string(), meaning.trim().to_string());
                }
                _ => {
                    return Err(PromptError::MalformedContext(format!(
                        "text outside a section on line {}",
                        lineno + 1
                    )))
                }
            }
        }
        ctx.domain_text = domain.join(" ");
        ctx.frequency_text = frequency.join(" ");
        Ok(ctx)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            PromptError::MalformedContext(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }

    /// Number of populated context fields.
    pub fn field_count(&self) -> usize {
        usize::from(!self.domain_text.is_empty())
            + self.channel_semantics.len()
            + usize::from(!self.frequency_text.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    #[default]
    Keep,
    Remove,
    /// Uniform offset in seconds; must be a whole number of sampling steps.
    Shift {
        offset_secs: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    #[serde(rename = "zscore")]
    ZScore,
    #[serde(rename = "revin")]
    RevIn,
}

impl Normalization {
    pub fn label(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::ZScore => "zscore",
            Normalization::RevIn => "revin",
        }
    }
}

/// Prompt ablation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVariant {
    #[serde(default)]
    pub timestamp_mode: TimestampMode,
    #[serde(default = "default_true")]
    pub context_enabled: bool,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub missing_mode: MissingMode,
    #[serde(default = "default_precision")]
    pub value_precision: usize,
    /// Character-length guard on the rendered prompt.
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
}

fn default_true() -> bool {
    true
}

fn default_precision() -> usize {
    4
}

impl Default for PromptVariant {
    fn default() -> Self {
        Self {
            timestamp_mode: TimestampMode::Keep,
            context_enabled: true,
            normalization: Normalization::Raw,
            missing_mode: MissingMode::Full,
            value_precision: 4,
            max_prompt_chars: None,
        }
    }
}

impl PromptVariant {
    /// Short label such as `keep+ctx+raw+full`.
    pub fn label(&self) -> String {
        let ts = match self.timestamp_mode {
            TimestampMode::Keep => "keep".to_string(),
            TimestampMode::Remove => "nots".to_string(),
            TimestampMode::Shift { offset_secs } => format!("shift{offset_secs:+}s"),
        };
        format!(
            "{ts}+{}+{}+{}",
            if self.context_enabled { "ctx" } else { "noctx" },
            self.normalization.label(),
            self.missing_mode.label()
        )
    }
}

/// Location and scale applied to the lookback, kept for inverting forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub mode: Normalization,
    pub location: f64,
    pub scale: f64,
}

impl NormalizationState {
    pub const IDENTITY: NormalizationState = NormalizationState {
        mode: Normalization::Raw,
        location: 0.0,
        scale: 1.0,
    };
}

/// Per-frame facts the directive needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub dataset: String,
    pub channel: String,
    pub frequency: Frequency,
    /// Training-split statistics of the channel, used by z-score normalization.
    pub train_stats: Option<ChannelStats>,
}

/// Whether the model answers directly or drafts, critiques and revises first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnswerProtocol {
    #[default]
    Direct,
    DraftCritiqueFinal,
}

/// One line of the series block in the (possibly normalized) prompt scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub timestamp: Option<NaiveDateTime>,
    pub value: Option<f64>,
}

/// A fully rendered instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPrompt {
    pub directive: String,
    pub context_block: Option<String>,
    pub series_block: String,
    pub answer_schema: String,
    pub normalization_state: NormalizationState,
    pub horizon: usize,
    /// Exact series values behind `series_block`, before decimal rounding.
    pub series: Vec<PromptPoint>,
}

impl HybridPrompt {
    /// Full prompt text sent to the model.
    pub fn text(&self) -> String {
        let mut parts = vec![self.directive.as_str()];
        if let Some(ctx) = &self.context_block {
            parts.push(ctx);
        }
        parts.push(&self.series_block);
        parts.push(&self.answer_schema);
        parts.join("\n\n")
    }

    pub fn series_lines(&self) -> usize {
        self.series_block.lines().count()
    }
}

/// Applies a timestamp ablation; `None` means timestamps are removed.
pub fn transform_timestamps(
    timestamps: &[NaiveDateTime],
    mode: TimestampMode,
    frequency: Frequency,
) -> Result<Option<Vec<NaiveDateTime>>, PromptError> {
    match mode {
        TimestampMode::Keep => Ok(Some(timestamps.to_vec())),
        TimestampMode::Remove => Ok(None),
        TimestampMode::Shift { offset_secs } => {
            if offset_secs % frequency.seconds() != 0 {
                return Err(PromptError::OffsetNotMultipleOfFrequency {
                    offset_secs,
                    frequency,
                });
            }
            let delta = TimeDelta::seconds(offset_secs);
            Ok(Some(timestamps.iter().map(|t| *t + delta).collect()))
        }
    }
}

/// Normalizes a lookback. Z-score uses training statistics; RevIN uses the
/// lookback's own mean and population std.
pub fn normalize_values(
    lookback: &[f64],
    mode: Normalization,
    train_stats: Option<ChannelStats>,
) -> Result<(Vec<f64>, NormalizationState), PromptError> {
    let (location, scale) = match mode {
        Normalization::Raw => return Ok((lookback.to_vec(), NormalizationState::IDENTITY)),
        Normalization::ZScore => match train_stats {
            Some(s) if s.std > 0.0 && s.std.is_finite() => (s.mean, s.std),
            _ => return Err(PromptError::MissingTrainStats),
        },
        Normalization::RevIn => {
            if lookback.is_empty() {
                return Err(PromptError::EmptyLookback);
            }
            let (m, s) = stats::mean_std(lookback);
            if !(s > 0.0) {
                return Err(PromptError::DegenerateWindow);
            }
            (m, s)
        }
    };
    let state = NormalizationState {
        mode,
        location,
        scale,
    };
    Ok((
        lookback.iter().map(|x| (x - location) / scale).collect(),
        state,
    ))
}

/// Maps model-scale values back to raw units.
pub fn denormalize_forecast(values: &[f64], state: &NormalizationState) -> Vec<f64> {
    values
        .iter()
        .map(|v| v * state.scale + state.location)
        .collect()
}

/// Renders a value with fixed decimals.
pub fn format_value(value: f64, precision: usize) -> String {
    format!("{value:.precision$}")
}

pub fn build_prompt(
    window: &ObservedWindow,
    context: &ContextDescriptor,
    variant: &PromptVariant,
    meta: &FrameMeta,
) -> Result<HybridPrompt, PromptError> {
    build_prompt_with_protocol(window, context, variant, meta, AnswerProtocol::Direct)
}

pub fn build_prompt_with_protocol(
    window: &ObservedWindow,
    context: &ContextDescriptor,
    variant: &PromptVariant,
    meta: &FrameMeta,
    protocol: AnswerProtocol,
) -> Result<HybridPrompt, PromptError> {
    let horizon = window.horizon();
    let observed = window.observed_values();
    if observed.is_empty() {
        return Err(PromptError::EmptyLookback);
    }
    let (_, state) = normalize_values(&observed, variant.normalization, meta.train_stats)?;
    let normalize = |v: f64| (v - state.location) / state.scale;

    let lookback_ts: Vec<NaiveDateTime> = window.lookback.iter().map(|p| p.timestamp).collect();
    let shown_ts = transform_timestamps(&lookback_ts, variant.timestamp_mode, meta.frequency)?;
    let shown_horizon = transform_timestamps(
        &window.horizon_timestamps,
        variant.timestamp_mode,
        meta.frequency,
    )?;

    let series: Vec<PromptPoint> = window
        .lookback
        .iter()
        .enumerate()
        .map(|(i, p)| PromptPoint {
            timestamp: shown_ts.as_ref().map(|ts| ts[i]),
            value: p.value.map(normalize),
        })
        .collect();

    let mut series_block = String::new();
    for (i, point) in series.iter().enumerate() {
        if i > 0 {
            series_block.push('\n');
        }
        let value = match point.value {
            Some(v) => format_value(v, variant.value_precision),
            None => MISSING_TOKEN.to_string(),
        };
        match point.timestamp {
            Some(ts) => {
                let _ = write!(series_block, "{}: {value}", ts.format(TIMESTAMP_RENDER));
            }
            None => series_block.push_str(&value),
        }
    }

    let directive = render_directive(window, meta, &state, shown_horizon.as_deref());

    let context_block = if variant.context_enabled {
        if context.domain_text.trim().is_empty() {
            return Err(PromptError::EmptyContext);
        }
        Some(render_context(context, &meta.channel))
    } else {
        None
    };

    let answer_schema = render_schema(horizon, protocol);

    let prompt = HybridPrompt {
        directive,
        context_block,
        series_block,
        answer_schema,
        normalization_state: state,
        horizon,
        series,
    };
    if let Some(limit) = variant.max_prompt_chars {
        let chars = prompt.text().chars().count();
        if chars > limit {
            return Err(PromptError::PromptTooLong { chars, limit });
        }
    }
    Ok(prompt)
}

fn render_directive(
    window: &ObservedWindow,
    meta: &FrameMeta,
    state: &NormalizationState,
    horizon_ts: Option<&[NaiveDateTime]>,
) -> String {
    let horizon = window.horizon();
    let mut d = format!(
        "Task: forecast the `{}` variable of the {} time series, sampled {}. \
         You are given the {} most recent observations below. \
         Predict the next {horizon} values",
        meta.channel,
        meta.dataset,
        meta.frequency.describe(),
        window.lookback.len(),
    );
    match horizon_ts {
        Some(ts) if !ts.is_empty() => {
            let _ = write!(
                d,
                ", covering {} to {}.",
                ts[0].format(TIMESTAMP_RENDER),
                ts[ts.len() - 1].format(TIMESTAMP_RENDER)
            );
        }
        _ => d.push('.'),
    }
    if horizon_ts.is_some() {
        d.push_str(" Each observation is listed as `timestamp: value`.");
    } else {
        d.push_str(" Observations are listed one value per line, oldest first.");
    }
    if state.mode != Normalization::Raw {
        d.push_str(" Values are standardized; forecast in the same standardized scale.");
    }
    if window.lookback.iter().any(|p| p.value.is_none()) {
        let _ = write!(d, " Missing observations are marked {MISSING_TOKEN}.");
    }
    d
}

fn render_context(context: &ContextDescriptor, channel: &str) -> String {
    let mut c = format!("Context: {}", context.domain_text.trim());
    if !context.frequency_text.is_empty() {
        let _ = write!(c, "\nSampling: {}", context.frequency_text);
    }
    if !context.channel_semantics.is_empty() {
        c.push_str("\nVariables:");
        for (name, meaning) in &context.channel_semantics {
            let marker = if name == channel { " (target)" } else { "" };
            let _ = write!(c, "\n- {name}{marker}: {meaning}");
        }
    }
    c
}

fn render_schema(horizon: usize, protocol: AnswerProtocol) -> String {
    let contract = format!(
        "{FORECAST_OPEN}v1, v2, ..., v{horizon}{FORECAST_CLOSE} containing exactly {horizon} \
         comma-separated numbers and nothing else"
    );
    match protocol {
        AnswerProtocol::Direct => format!(
            "Reason step by step about trend, seasonality and recent dynamics, then finish your \
             response with {contract}."
        ),
        AnswerProtocol::DraftCritiqueFinal => format!(
            "Work in three stages. First write a draft forecast inside {DRAFT_OPEN}...{DRAFT_CLOSE}. \
             Then critique the draft in one paragraph, checking level, trend, seasonality and \
             turning points against the history. Finally give the revised forecast as \
             {contract}."
        ),
    }
}
