//! Reasoning strategies and multi-generation aggregation.
//!
//! * one-shot: a single call produces all `H` values;
//! * decoupled: a single call that drafts, critiques and revises in-prompt;
//! * rollout: `c` sequential calls, each predicting a chunk of the horizon
//!   with the earlier chunks appended to the lookback.
//!
//! [`Engine::forecast_window`] repeats a strategy `k` times and averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ObservedPoint, ObservedWindow};
use crate::parser::{self, ParseFailure, RepairError};
use crate::prompt::{
    self, AnswerProtocol, ContextDescriptor, FrameMeta, HybridPrompt, PromptError, PromptVariant,
    DRAFT_OPEN, FORECAST_OPEN,
};
use crate::provider::{
    CompletionRequest, FollowUp, Gateway, GenerationRecord, ProviderError, ProviderSpec,
    SamplingParams,
};

pub const DEFAULT_GENERATIONS: usize = 3;
pub const DEFAULT_ROLLOUT_ROUNDS: usize = 4;
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("parse failure{}: {failure}", round_suffix(*.round))]
    Parse {
        failure: ParseFailure,
        round: Option<usize>,
    },
    #[error("response contains a draft but no final forecast block")]
    MissingFinalBlock { raw: String },
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
}

fn round_suffix(round: Option<usize>) -> String {
    round
        .map(|r| format!(" in rollout round {r}"))
        .unwrap_or_default()
}

impl EngineError {
    /// Raw model output associated with a parse failure, if any.
    pub fn raw_response(&self) -> Option<&str> {
        match self {
            EngineError::Parse { failure, .. } => Some(&failure.raw),
            EngineError::MissingFinalBlock { raw } => Some(raw),
            _ => None,
        }
    }

    pub fn is_parse_failure(&self) -> bool {
        matches!(
            self,
            EngineError::Parse { .. } | EngineError::MissingFinalBlock { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OneShot,
    Decoupled,
    Rollout { rounds: usize },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::OneShot => "one_shot".into(),
            Strategy::Decoupled => "decoupled".into(),
            Strategy::Rollout { rounds } => format!("rollout{rounds}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
}

fn default_generations() -> usize {
    DEFAULT_GENERATIONS
}

fn default_parse_retries() -> u32 {
    DEFAULT_PARSE_RETRIES
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::OneShot,
            generations: DEFAULT_GENERATIONS,
            sampling: SamplingParams::default(),
            parse_retries: DEFAULT_PARSE_RETRIES,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self, horizon: usize) -> Result<(), EngineError> {
        if self.generations == 0 {
            return Err(EngineError::InvalidConfig(
                "generations must be >= 1".into(),
            ));
        }
        if let Strategy::Rollout { rounds } = self.strategy {
            if rounds < 2 || rounds > horizon {
                return Err(EngineError::InvalidConfig(format!(
                    "rollout rounds must be in [2, H={horizon}], got {rounds}"
                )));
            }
        }
        self.sampling
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }
}

/// Chunk sizes of a rollout: `floor(H/c)` for each round, the last taking the remainder.
pub fn rollout_partition(horizon: usize, rounds: usize) -> Vec<usize> {
    if rounds == 0 || horizon == 0 {
        return Vec::new();
    }
    let base = horizon / rounds;
    let mut sizes = vec![base; rounds];
    sizes[rounds - 1] = horizon - base * (rounds - 1);
    sizes
}

/// Output of one strategy run (one generation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutput {
    /// Raw-scale forecast of length `H`.
    pub forecast: Vec<f64>,
    /// One record per provider call, including corrective re-prompts.
    pub records: Vec<GenerationRecord>,
    pub repairs: Vec<String>,
}

/// `k` generations and their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBundle {
    pub per_generation: Vec<Vec<f64>>,
    pub mean_forecast: Vec<f64>,
    /// Population std across generations at each step.
    pub per_step_std: Vec<f64>,
    pub records: Vec<Vec<GenerationRecord>>,
    pub repairs: Vec<Vec<String>>,
}

impl ForecastBundle {
    /// Aggregates strategy outputs. All forecasts must share one length.
    pub fn from_outputs(outputs: Vec<StrategyOutput>) -> Self {
        let per_generation: Vec<Vec<f64>> = outputs.iter().map(|o| o.forecast.clone()).collect();
        let (mean_forecast, per_step_std) = aggregate(&per_generation);
        let (records, repairs) = outputs.into_iter().map(|o| (o.records, o.repairs)).unzip();
        Self {
            per_generation,
            mean_forecast,
            per_step_std,
            records,
            repairs,
        }
    }

    pub fn generations(&self) -> usize {
        self.per_generation.len()
    }
}

/// Per-step arithmetic mean and population std across equal-length forecasts.
pub fn aggregate(forecasts: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = forecasts.first() else {
        return (Vec::new(), Vec::new());
    };
    let k = forecasts.len() as f64;
    let horizon = first.len();
    let mut mean = vec![0.0; horizon];
    for f in forecasts {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k;
    }
    let std = (0..horizon)
        .map(|i| {
            let var = forecasts
                .iter()
                .map(|f| (f[i] - mean[i]).powi(2))
                .sum::<f64>()
                / k;
            var.sqrt()
        })
        .collect();
    (mean, std)
}

/// Everything that defines one forecasting task apart from the strategy.
#[derive(Debug, Clone, Copy)]
pub struct TaskInput<'a> {
    pub window: &'a ObservedWindow,
    pub context: &'a ContextDescriptor,
    pub variant: &'a PromptVariant,
    pub meta: &'a FrameMeta,
}

/// Raw-scale values, every provider call made, and the repairs applied.
type Answer = (Vec<f64>, Vec<GenerationRecord>, Vec<String>);

/// Runs strategies against one provider.
#[derive(Debug, Clone, Copy)]
pub struct Engine<'a> {
    gateway: &'a Gateway,
    provider: &'a ProviderSpec,
}

impl<'a> Engine<'a> {
    pub fn new(gateway: &'a Gateway, provider: &'a ProviderSpec) -> Self {
        Self { gateway, provider }
    }

    /// Dispatches a prompt and parses `prompt.horizon` values, re-prompting on demand.
    fn ask(
        &self,
        prompt: &HybridPrompt,
        cfg: &StrategyConfig,
        generation: u32,
        require_final_block: bool,
    ) -> Result<Answer, EngineError> {
        let first = self.gateway.dispatch(
            CompletionRequest::new(prompt, generation),
            &cfg.sampling,
            self.provider,
        )?;
        let raw = first.raw_response();
        if require_final_block && !raw.contains(FORECAST_OPEN) && raw.contains(DRAFT_OPEN) {
            return Err(EngineError::MissingFinalBlock { raw });
        }
        let mut records = vec![first];
        let mut follow_ups: Vec<FollowUp> = Vec::new();
        let mut last_raw = raw.clone();
        let parsed = parser::parse_with_repair(&raw, prompt.horizon, cfg.parse_retries, |fix| {
            follow_ups.push(FollowUp {
                assistant: last_raw.clone(),
                user: fix.to_string(),
            });
            let request = CompletionRequest {
                prompt,
                generation,
                follow_ups: &follow_ups,
            };
            let record = self
                .gateway
                .dispatch(request, &cfg.sampling, self.provider)?;
            last_raw = record.raw_response();
            records.push(record);
            Ok::<_, ProviderError>(last_raw.clone())
        });
        let parsed = match parsed {
            Ok(p) => p,
            Err(RepairError::Parse(failure)) => {
                return Err(EngineError::Parse {
                    failure,
                    round: None,
                })
            }
            Err(RepairError::Reprompt(e)) => return Err(e.into()),
        };
        let values = prompt::denormalize_forecast(&parsed.values, &prompt.normalization_state);
        Ok((values, records, parsed.repairs_applied))
    }

    pub fn run_one_shot(
        &self,
        task: TaskInput<'_>,
        cfg: &StrategyConfig,
        generation: u32,
    ) -> Result<StrategyOutput, EngineError> {
        let prompt = prompt::build_prompt(task.window, task.context, task.variant, task.meta)?;
        let (forecast, records, repairs) = self.ask(&prompt, cfg, generation, false)?;
        Ok(StrategyOutput {
            forecast,
            records,
            repairs,
        })
    }

    pub fn run_decoupled(
        &self,
        task: TaskInput<'_>,
        cfg: &StrategyConfig,
        generation: u32,
    ) -> Result<StrategyOutput, EngineError> {
        let prompt = prompt::build_prompt_with_protocol(
            task.window,
            task.context,
            task.variant,
            task.meta,
            AnswerProtocol::DraftCritiqueFinal,
        )?;
        let (forecast, records, repairs) = self.ask(&prompt, cfg, generation, true)?;
        Ok(StrategyOutput {
            forecast,
            records,
            repairs,
        })
    }

    pub fn run_rollout(
        &self,
        task: TaskInput<'_>,
        cfg: &StrategyConfig,
        rounds: usize,
        generation: u32,
    ) -> Result<StrategyOutput, EngineError> {
        let horizon = task.window.horizon();
        if rounds < 2 || rounds > horizon {
            return Err(EngineError::InvalidConfig(format!(
                "rollout rounds must be in [2, H={horizon}], got {rounds}"
            )));
        }
        let mut extended = task.window.clone();
        let mut forecast = Vec::with_capacity(horizon);
        let mut records = Vec::new();
        let mut repairs = Vec::new();
        let mut offset = 0;
        for (round, size) in rollout_partition(horizon, rounds).into_iter().enumerate() {
            let chunk_ts = &task.window.horizon_timestamps[offset..offset + size];
            extended.horizon_timestamps = chunk_ts.to_vec();
            let prompt = prompt::build_prompt(&extended, task.context, task.variant, task.meta)?;
            let (values, round_records, round_repairs) = self
                .ask(&prompt, cfg, generation, false)
                .map_err(|e| match e {
                    EngineError::Parse { failure, .. } => EngineError::Parse {
                        failure,
                        round: Some(round),
                    },
                    other => other,
                })?;
            extended
                .lookback
                .extend(
                    chunk_ts
                        .iter()
                        .zip(&values)
                        .map(|(&timestamp, &v)| ObservedPoint {
                            timestamp,
                            value: Some(v),
                        }),
                );
            forecast.extend(values);
            records.extend(round_records);
            repairs.extend(
                round_repairs
                    .into_iter()
                    .map(|r| format!("round{round}:{r}")),
            );
            offset += size;
        }
        Ok(StrategyOutput {
            forecast,
            records,
            repairs,
        })
    }

    /// Runs the configured strategy once for generation index `generation`.
    pub fn run_strategy(
        &self,
        task: TaskInput<'_>,
        cfg: &StrategyConfig,
        generation: u32,
    ) -> Result<StrategyOutput, EngineError> {
        match cfg.strategy {
            Strategy::OneShot => self.run_one_shot(task, cfg, generation),
            Strategy::Decoupled => self.run_decoupled(task, cfg, generation),
            Strategy::Rollout { rounds } => self.run_rollout(task, cfg, rounds, generation),
        }
    }

    /// Runs `cfg.generations` independent generations and aggregates them.
    /// Any failed generation fails the whole bundle.
    pub fn forecast_window(
        &self,
        task: TaskInput<'_>,
        cfg: &StrategyConfig,
    ) -> Result<ForecastBundle, EngineError> {
        cfg.validate(task.window.horizon())?;
        let outputs = (0..cfg.generations as u32)
            .map(|g| self.run_strategy(task, cfg, g))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ForecastBundle::from_outputs(outputs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions() {
        assert_eq!(rollout_partition(96, 4), vec![24, 24, 24, 24]);
        assert_eq!(rollout_partition(10, 4), vec![2, 2, 2, 4]);
        assert_eq!(rollout_partition(5, 5), vec![1; 5]);
    }

    #[test]
    fn aggregate_by_hand() {
        let (mean, std) = aggregate(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        assert_eq!(mean, vec![1.0, 2.0]);
        assert_eq!(std, vec![1.0, 2.0]);
        let (mean, std) = aggregate(&[vec![3.0, -1.0]]);
        assert_eq!(mean, vec![3.0, -1.0]);
        assert_eq!(std, vec![0.0, 0.0]);
    }

    #[test]
    fn config_checks() {
        let mut cfg = StrategyConfig::default();
        assert_eq!(cfg.generations, 3);
        assert!(cfg.validate(4).is_ok());
        cfg.generations = 0;
        assert!(cfg.validate(4).is_err());
        cfg.generations = 1;
        cfg.strategy = Strategy::Rollout { rounds: 1 };
        assert!(cfg.validate(4).is_err());
        cfg.strategy = Strategy::Rollout { rounds: 5 };
        assert!(cfg.validate(4).is_err());
    }
}
