//! Declarative run configuration.
//!
//! Configs are TOML documents. A top-level `include = [...]` list pulls in
//! other files (relative to the including file) or built-in dataset presets
//! (`"preset:etth1"`); included tables are deep-merged underneath the
//! including document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::dataset::{CsvSchema, Frequency, MissingMode};
use crate::diagnostics::Thresholds;
use crate::engine::{
    Strategy, StrategyConfig, DEFAULT_GENERATIONS, DEFAULT_PARSE_RETRIES, DEFAULT_ROLLOUT_ROUNDS,
};
use crate::prompt::{ContextDescriptor, Normalization, PromptVariant, TimestampMode};
use crate::provider::{NoisyBase, ProviderKind, ProviderSpec, SamplingParams};

pub const DEFAULT_UNCERTAINTY_GENERATIONS: usize = 50;
pub const DEFAULT_BAND_LEVEL: f64 = 0.8;
pub const DEFAULT_SHIFT_STEPS: i64 = 24;
pub const DEFAULT_MISSING_RATE: f64 = 0.2;
pub const SWEEP_VALUES: [usize; 7] = [48, 72, 96, 120, 144, 168, 192];

const PRESETS: &[(&str, &str)] = &[
    ("etth1", include_str!("../../presets/etth1.toml")),
    ("etth2", include_str!("../../presets/etth2.toml")),
    ("ettm1", include_str!("../../presets/ettm1.toml")),
    ("ettm2", include_str!("../../presets/ettm2.toml")),
    ("aqwan", include_str!("../../presets/aqwan.toml")),
    ("aqshunyi", include_str!("../../presets/aqshunyi.toml")),
    ("exchange", include_str!("../../presets/exchange.toml")),
    ("wind", include_str!("../../presets/wind.toml")),
    ("nasdaq", include_str!("../../presets/nasdaq.toml")),
    ("vitaldb", include_str!("../../presets/vitaldb.toml")),
];

const CONTEXTS: &[(&str, &str)] = &[
    ("ett", include_str!("../../contexts/ett.txt")),
    ("aq", include_str!("../../contexts/aq.txt")),
    ("exchange", include_str!("../../contexts/exchange.txt")),
    ("nasdaq", include_str!("../../contexts/nasdaq.txt")),
    ("wind", include_str!("../../contexts/wind.txt")),
    ("vitaldb", include_str!("../../contexts/vitaldb.txt")),
];

/// Names of the built-in dataset presets.
pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

/// Text of a built-in context sidecar.
pub fn builtin_context(name: &str) -> Option<&'static str> {
    CONTEXTS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default)]
    pub path: PathBuf,
    pub timestamp_column: String,
    /// Channels to load and evaluate; empty means all.
    #[serde(default)]
    pub channels: Vec<String>,
    #[serde(default)]
    pub timestamp_format: Option<String>,
    #[serde(default)]
    pub frequency: Option<Frequency>,
    #[serde(default)]
    pub allow_irregular: bool,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// Context sidecar; `builtin:<name>` selects a bundled one.
    #[serde(default)]
    pub context_file: Option<String>,
}

fn default_split() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

impl DatasetConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            timestamp_column: self.timestamp_column.clone(),
            channel_columns: self.channels.clone(),
            timestamp_format: self.timestamp_format.clone(),
            frequency: self.frequency,
            allow_empty_cells: false,
            allow_irregular: self.allow_irregular,
            domain_note: String::new(),
        }
    }

    pub fn context(&self) -> Result<ContextDescriptor, RunError> {
        match self.context_file.as_deref() {
            Some(spec) => {
                let parsed = match spec.strip_prefix("builtin:") {
                    Some(name) => {
                        let text =
                            builtin_context(name).ok_or_else(|| RunError::ConfigInvalid {
                                field: "dataset.context_file".into(),
                                reason: format!("no built-in context named `{name}`"),
                            })?;
                        ContextDescriptor::parse(text)
                    }
                    None => ContextDescriptor::load(spec),
                };
                parsed.map_err(|e| RunError::ConfigInvalid {
                    field: "dataset.context_file".into(),
                    reason: e.to_string(),
                })
            }
            None => Ok(ContextDescriptor {
                domain_text: format!("Time series from the {} dataset.", self.name),
                ..ContextDescriptor::default()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    #[serde(default = "default_steps")]
    pub lookback: usize,
    #[serde(default = "default_steps")]
    pub horizon: usize,
    /// Defaults to the horizon (non-overlapping test windows).
    #[serde(default)]
    pub stride: Option<usize>,
    /// Cap on windows per channel, taken from the start of the test split.
    #[serde(default)]
    pub max_windows: Option<usize>,
}

fn default_steps() -> usize {
    96
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            stride: None,
            max_windows: None,
        }
    }
}

impl WindowConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    OneShot,
    Decoupled,
    Rollout,
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_shot" | "one-shot" | "oneshot" => Ok(StrategyKind::OneShot),
            "decoupled" => Ok(StrategyKind::Decoupled),
            "rollout" => Ok(StrategyKind::Rollout),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "default_kind")]
    pub kind: StrategyKind,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
}

fn default_kind() -> StrategyKind {
    StrategyKind::OneShot
}

fn default_rounds() -> usize {
    DEFAULT_ROLLOUT_ROUNDS
}

fn default_generations() -> usize {
    DEFAULT_GENERATIONS
}

fn default_parse_retries() -> u32 {
    DEFAULT_PARSE_RETRIES
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            kind: StrategyKind::OneShot,
            rounds: DEFAULT_ROLLOUT_ROUNDS,
            generations: DEFAULT_GENERATIONS,
            parse_retries: DEFAULT_PARSE_RETRIES,
        }
    }
}

impl StrategySection {
    pub fn strategy(&self) -> Strategy {
        match self.kind {
            StrategyKind::OneShot => Strategy::OneShot,
            StrategyKind::Decoupled => Strategy::Decoupled,
            StrategyKind::Rollout => Strategy::Rollout {
                rounds: self.rounds,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampSetting {
    #[default]
    Keep,
    Remove,
    ShiftForward,
    ShiftBackward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    #[serde(default)]
    pub timestamps: TimestampSetting,
    /// Offset of the shift ablations, in sampling steps.
    #[serde(default = "default_shift_steps")]
    pub shift_steps: i64,
    #[serde(default = "default_true")]
    pub context: bool,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub missing: MissingMode,
    #[serde(default = "default_missing_rate")]
    pub missing_rate: f64,
    #[serde(default = "default_precision")]
    pub precision: usize,
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
}

fn default_shift_steps() -> i64 {
    DEFAULT_SHIFT_STEPS
}

fn default_true() -> bool {
    true
}

fn default_missing_rate() -> f64 {
    DEFAULT_MISSING_RATE
}

fn default_precision() -> usize {
    4
}

impl Default for VariantSection {
    fn default() -> Self {
        Self {
            timestamps: TimestampSetting::Keep,
            shift_steps: DEFAULT_SHIFT_STEPS,
            context: true,
            normalization: Normalization::Raw,
            missing: MissingMode::Full,
            missing_rate: DEFAULT_MISSING_RATE,
            precision: 4,
            max_prompt_chars: None,
        }
    }
}

impl VariantSection {
    pub fn prompt_variant(&self, frequency: Frequency) -> PromptVariant {
        let step = frequency.seconds();
        let timestamp_mode = match self.timestamps {
            TimestampSetting::Keep => TimestampMode::Keep,
            TimestampSetting::Remove => TimestampMode::Remove,
            TimestampSetting::ShiftForward => TimestampMode::Shift {
                offset_secs: self.shift_steps * step,
            },
            TimestampSetting::ShiftBackward => TimestampMode::Shift {
                offset_secs: -self.shift_steps * step,
            },
        };
        PromptVariant {
            timestamp_mode,
            context_enabled: self.context,
            normalization: self.normalization,
            missing_mode: self.missing,
            value_precision: self.precision,
            max_prompt_chars: self.max_prompt_chars,
        }
    }

    /// Short label used in records and summaries.
    pub fn label(&self) -> String {
        let ts = match self.timestamps {
            TimestampSetting::Keep => "keep".to_string(),
            TimestampSetting::Remove => "nots".to_string(),
            TimestampSetting::ShiftForward => format!("fwd{}", self.shift_steps),
            TimestampSetting::ShiftBackward => format!("bwd{}", self.shift_steps),
        };
        format!(
            "{ts}+{}+{}+{}",
            if self.context { "ctx" } else { "noctx" },
            self.normalization.label(),
            self.missing.label()
        )
    }
}

/// Named prompt ablations, applied on top of the configured variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantPreset {
    Baseline,
    NoTimestamps,
    ShiftForward,
    ShiftBackward,
    NoContext,
    Zscore,
    Revin,
    NoImp,
    NoneImp,
    LinImp,
}

impl VariantPreset {
    /// The seven rows of the prompt ablation table, in order.
    pub const ABLATION: [VariantPreset; 7] = [
        VariantPreset::Baseline,
        VariantPreset::NoTimestamps,
        VariantPreset::ShiftForward,
        VariantPreset::ShiftBackward,
        VariantPreset::NoContext,
        VariantPreset::Zscore,
        VariantPreset::Revin,
    ];

    pub fn apply(self, base: &VariantSection) -> VariantSection {
        let baseline = VariantSection {
            timestamps: TimestampSetting::Keep,
            context: true,
            normalization: Normalization::Raw,
            missing: MissingMode::Full,
            ..base.clone()
        };
        match self {
            VariantPreset::Baseline => baseline,
            VariantPreset::NoTimestamps => VariantSection {
                timestamps: TimestampSetting::Remove,
                ..baseline
            },
            VariantPreset::ShiftForward => VariantSection {
                timestamps: TimestampSetting::ShiftForward,
                ..baseline
            },
            VariantPreset::ShiftBackward => VariantSection {
                timestamps: TimestampSetting::ShiftBackward,
                ..baseline
            },
            VariantPreset::NoContext => VariantSection {
                context: false,
                ..baseline
            },
            VariantPreset::Zscore => VariantSection {
                normalization: Normalization::ZScore,
                ..baseline
            },
            VariantPreset::Revin => VariantSection {
                normalization: Normalization::RevIn,
                ..baseline
            },
            VariantPreset::NoImp => VariantSection {
                missing: MissingMode::NoImp,
                ..baseline
            },
            VariantPreset::NoneImp => VariantSection {
                missing: MissingMode::NoneImp,
                ..baseline
            },
            VariantPreset::LinImp => VariantSection {
                missing: MissingMode::LinImp,
                ..baseline
            },
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            VariantPreset::Baseline => "baseline",
            VariantPreset::NoTimestamps => "no_timestamps",
            VariantPreset::ShiftForward => "shift_forward",
            VariantPreset::ShiftBackward => "shift_backward",
            VariantPreset::NoContext => "no_context",
            VariantPreset::Zscore => "zscore",
            VariantPreset::Revin => "revin",
            VariantPreset::NoImp => "no_imp",
            VariantPreset::NoneImp => "none_imp",
            VariantPreset::LinImp => "lin_imp",
        }
    }

    /// Row title in the ablation table.
    pub fn title(self) -> &'static str {
        match self {
            VariantPreset::Baseline => "baseline",
            VariantPreset::NoTimestamps => "w/o timestamps",
            VariantPreset::ShiftForward => "w/ forward shifting",
            VariantPreset::ShiftBackward => "w/ backward shifting",
            VariantPreset::NoContext => "w/o context",
            VariantPreset::Zscore => "w/ Z-score",
            VariantPreset::Revin => "w/ RevIN",
            VariantPreset::NoImp => "No-Imp",
            VariantPreset::NoneImp => "None-Imp",
            VariantPreset::LinImp => "Lin-Imp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Response cache shared by all runs; defaults to `<out>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default)]
    pub seed: u64,
    /// Largest task failure rate that still counts as success.
    #[serde(default = "default_tolerance")]
    pub failure_tolerance: f64,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_parallel() -> usize {
    4
}

fn default_tolerance() -> f64 {
    0.05
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out: default_out(),
            cache_dir: None,
            max_parallel_requests: default_parallel(),
            seed: 0,
            failure_tolerance: default_tolerance(),
        }
    }
}

impl RunSection {
    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.out.join("cache"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub lookback: Vec<usize>,
    #[serde(default)]
    pub horizon: Vec<usize>,
    #[serde(default)]
    pub temperature: Vec<f64>,
    #[serde(default)]
    pub strategy: Vec<StrategyKind>,
    #[serde(default)]
    pub variant: Vec<VariantPreset>,
    #[serde(default)]
    pub max_grid: Option<usize>,
}

impl SweepAxes {
    pub const DEFAULT_MAX_GRID: usize = 64;

    pub fn grid_size(&self) -> usize {
        [
            self.lookback.len(),
            self.horizon.len(),
            self.temperature.len(),
            self.strategy.len(),
            self.variant.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    #[serde(default = "default_uncertainty_k")]
    pub generations: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_uncertainty_k() -> usize {
    DEFAULT_UNCERTAINTY_GENERATIONS
}

fn default_level() -> f64 {
    DEFAULT_BAND_LEVEL
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            generations: DEFAULT_UNCERTAINTY_GENERATIONS,
            level: DEFAULT_BAND_LEVEL,
        }
    }
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub variant: VariantSection,
    pub provider: ProviderSpec,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub uncertainty: UncertaintySection,
    #[serde(default = "Thresholds::default")]
    pub diagnostics: Thresholds,
}

fn invalid(field: &str, reason: impl Into<String>) -> RunError {
    RunError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    /// Parses a config document, resolving includes relative to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunError> {
        let table = load_table(text, base_dir, 0)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid("<document>", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy.strategy(),
            generations: self.strategy.generations,
            sampling: self.sampling,
            parse_retries: self.strategy.parse_retries,
        }
    }

    /// 8 hex digits identifying the resolved config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..4])
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let w = &self.window;
        if w.lookback == 0 {
            return Err(invalid("window.lookback", "must be >= 1"));
        }
        if w.horizon == 0 {
            return Err(invalid("window.horizon", "must be >= 1"));
        }
        if w.stride == Some(0) {
            return Err(invalid("window.stride", "must be >= 1"));
        }
        if w.max_windows == Some(0) {
            return Err(invalid("window.max_windows", "must be >= 1"));
        }
        let split: f64 = self.dataset.split.iter().sum();
        if (split - 1.0).abs() > 1e-9 || self.dataset.split.iter().any(|r| *r < 0.0) {
            return Err(invalid(
                "dataset.split",
                format!("ratios must sum to 1, got {split}"),
            ));
        }
        if self.dataset.path.as_os_str().is_empty() {
            return Err(invalid("dataset.path", "missing"));
        }
        self.strategy_config()
            .validate(w.horizon)
            .map_err(|e| invalid("strategy", e.to_string()))?;
        self.provider
            .validate()
            .map_err(|e| invalid("provider", e.to_string()))?;
        let v = &self.variant;
        if !(0.0..1.0).contains(&v.missing_rate) {
            return Err(invalid("variant.missing_rate", "must lie in [0, 1)"));
        }
        if self.run.max_parallel_requests == 0 {
            return Err(invalid("run.max_parallel_requests", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.run.failure_tolerance) {
            return Err(invalid("run.failure_tolerance", "must lie in [0, 1]"));
        }
        if self.uncertainty.generations < 2 {
            return Err(invalid("uncertainty.generations", "must be >= 2"));
        }
        if !(self.uncertainty.level > 0.0 && self.uncertainty.level < 1.0) {
            return Err(invalid("uncertainty.level", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn preset_table(name: &str) -> Result<toml::Table, RunError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| invalid("include", format!("unknown preset `{name}`")))?;
    text.parse::<toml::Table>()
        .map_err(|e| invalid("include", format!("preset `{name}`: {e}")))
}

const MAX_INCLUDE_DEPTH: usize = 8;

fn load_table(text: &str, base_dir: &Path, depth: usize) -> Result<toml::Table, RunError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(invalid("include", "includes nested too deeply"));
    }
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| invalid("<document>", e.to_string()))?;
    resolve_paths(&mut table, base_dir);
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(invalid("include", format!("expected strings, got {other}"))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(invalid("include", format!("expected a list, got {other}"))),
    };
    let mut merged = toml::Table::new();
    for inc in includes {
        let included = match inc.strip_prefix("preset:") {
            Some(name) => preset_table(name)?,
            None => {
                let path = base_dir.join(&inc);
                let text = std::fs::read_to_string(&path).map_err(|e| RunError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                load_table(&text, path.parent().unwrap_or(base_dir), depth + 1)?
            }
        };
        deep_merge(&mut merged, included);
    }
    deep_merge(&mut merged, table);
    Ok(merged)
}

fn deep_merge(into: &mut toml::Table, from: toml::Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(toml::Value::Table(existing)), toml::Value::Table(incoming)) => {
                deep_merge(existing, incoming)
            }
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

/// Rewrites relative path-valued keys against the directory of the file that set them.
fn resolve_paths(table: &mut toml::Table, base_dir: &Path) {
    const PATH_KEYS: &[(&str, &str)] = &[
        ("dataset", "path"),
        ("dataset", "context_file"),
        ("provider", "fixture"),
        ("run", "out"),
        ("run", "cache_dir"),
    ];
    for (section, key) in PATH_KEYS {
        let Some(toml::Value::Table(t)) = table.get_mut(*section) else {
            continue;
        };
        if let Some(toml::Value::String(s)) = t.get_mut(*key) {
            if !s.starts_with("builtin:") && Path::new(s.as_str()).is_relative() {
                *s = base_dir.join(&*s).to_string_lossy().into_owned();
            }
        }
    }
}

/// Parses a `--provider` shorthand:
/// `mock_seasonal_naive:<period>`, `mock_noisy:<sigma>:<seed>[:<period>]`
/// (linear trend base when no period), `mock_scripted:<fixture>`, or
/// `deepseek` (official endpoint, `DEEPSEEK_API_KEY`). Anything else is read
/// as a TOML file holding a provider table.
pub fn parse_provider_arg(arg: &str) -> Result<ProviderSpec, RunError> {
    let bad = |reason: &str| invalid("--provider", format!("{arg}: {reason}"));
    let parts: Vec<&str> = arg.split(':').collect();
    match parts.as_slice() {
        ["mock_seasonal_naive", period] => Ok(ProviderSpec::seasonal_naive(
            period
                .parse()
                .map_err(|_| bad("period must be an integer"))?,
        )),
        ["mock_noisy", sigma, seed, rest @ ..] => {
            let sigma = sigma.parse().map_err(|_| bad("sigma must be a number"))?;
            let seed = seed.parse().map_err(|_| bad("seed must be an integer"))?;
            let base = match rest {
                [] => NoisyBase::LinearTrend,
                [period] => NoisyBase::SeasonalNaive {
                    period: period
                        .parse()
                        .map_err(|_| bad("period must be an integer"))?,
                },
                _ => return Err(bad("too many fields")),
            };
            Ok(ProviderSpec::noisy(base, sigma, seed))
        }
        ["mock_scripted", ..] => Ok(ProviderSpec::new(ProviderKind::MockScripted {
            fixture: PathBuf::from(&arg["mock_scripted:".len()..]),
        })),
        ["deepseek"] => Ok(ProviderSpec::http_chat(
            "https://api.deepseek.com/chat/completions",
            "deepseek-reasoner",
            "DEEPSEEK_API_KEY",
        )),
        _ => {
            let text = std::fs::read_to_string(arg).map_err(|e| RunError::Io {
                path: arg.to_string(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| bad(&e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!(
            "include = [\"preset:etth1\"]\n[dataset]\npath = \"data.csv\"\n[provider]\nkind = \"mock_seasonal_naive\"\nperiod = 24\n{extra}"
        )
    }

    #[test]
    fn preset_defaults() {
        let cfg = RunConfig::from_toml_str(&minimal(""), Path::new("/cfg")).unwrap();
        assert_eq!(cfg.dataset.name, "ETTh1");
        assert_eq!(cfg.dataset.path, PathBuf::from("/cfg/data.csv"));
        assert_eq!((cfg.window.lookback, cfg.window.horizon), (96, 96));
        assert_eq!(cfg.window.stride(), 96);
        assert_eq!(cfg.strategy.generations, 3);
        assert_eq!(cfg.sampling, SamplingParams::default());
        assert_eq!(cfg.uncertainty.generations, 50);
        assert_eq!(cfg.uncertainty.level, 0.8);
        assert_eq!(cfg.dataset.split, [0.7, 0.1, 0.2]);
        assert!(cfg.validate().is_ok());
        assert!(cfg
            .dataset
            .context()
            .unwrap()
            .channel_semantics
            .contains_key("OT"));
    }

    #[test]
    fn dataset_presets_follow_published_settings() {
        let shape = |name: &str| {
            let t = preset_table(name).unwrap();
            let w = t["window"].as_table().unwrap();
            (
                w["lookback"].as_integer().unwrap(),
                w["horizon"].as_integer().unwrap(),
            )
        };
        assert_eq!(shape("nasdaq"), (36, 36));
        assert_eq!(shape("vitaldb"), (300, 200));
        for name in [
            "etth1", "etth2", "ettm1", "ettm2", "aqwan", "aqshunyi", "exchange", "wind",
        ] {
            assert_eq!(shape(name), (96, 96), "{name}");
        }
    }

    #[test]
    fn overrides_win_over_includes() {
        let cfg =
            RunConfig::from_toml_str(&minimal("[window]\nhorizon = 48\n"), Path::new(".")).unwrap();
        assert_eq!((cfg.window.lookback, cfg.window.horizon), (96, 48));
    }

    #[test]
    fn invalid_fields_are_named() {
        let cfg =
            RunConfig::from_toml_str(&minimal("[window]\nhorizon = 0\n"), Path::new(".")).unwrap();
        match cfg.validate() {
            Err(RunError::ConfigInvalid { field, .. }) => assert_eq!(field, "window.horizon"),
            other => panic!("{other:?}"),
        }
        assert!(
            RunConfig::from_toml_str(&minimal("[window]\nbogus = 1\n"), Path::new(".")).is_err()
        );
        assert!(RunConfig::from_toml_str("include = [\"preset:nope\"]", Path::new(".")).is_err());
    }

    #[test]
    fn ablation_variants() {
        let base = VariantSection::default();
        let labels: Vec<String> = VariantPreset::ABLATION
            .iter()
            .map(|p| p.apply(&base).label())
            .collect();
        assert_eq!(
            labels,
            vec![
                "keep+ctx+raw+full",
                "nots+ctx+raw+full",
                "fwd24+ctx+raw+full",
                "bwd24+ctx+raw+full",
                "keep+noctx+raw+full",
                "keep+ctx+zscore+full",
                "keep+ctx+revin+full"
            ]
        );
        let v = VariantPreset::ShiftBackward
            .apply(&base)
            .prompt_variant(Frequency::Hourly);
        assert_eq!(
            v.timestamp_mode,
            TimestampMode::Shift {
                offset_secs: -24 * 3600
            }
        );
    }

    #[test]
    fn provider_shorthands() {
        assert_eq!(
            parse_provider_arg("mock_seasonal_naive:24").unwrap(),
            ProviderSpec::seasonal_naive(24)
        );
        assert_eq!(
            parse_provider_arg("mock_noisy:1.5:7:24").unwrap().kind,
            ProviderKind::MockNoisy {
                base: NoisyBase::SeasonalNaive { period: 24 },
                sigma: 1.5,
                seed: 7
            }
        );
        assert_eq!(
            parse_provider_arg("deepseek")
                .unwrap()
                .auth_env_var
                .as_deref(),
            Some("DEEPSEEK_API_KEY")
        );
        assert!(parse_provider_arg("mock_seasonal_naive:x").is_err());
    }

    #[test]
    fn grid_size_counts_empty_axes_as_one() {
        let axes = SweepAxes {
            strategy: vec![StrategyKind::OneShot, StrategyKind::Rollout],
            horizon: vec![48, 192],
            ..SweepAxes::default()
        };
        assert_eq!(axes.grid_size(), 4);
    }
}
