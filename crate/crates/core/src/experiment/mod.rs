//! Experiment runner: config loading, bounded-parallel task dispatch,
//! JSONL/CSV persistence and the five commands (`forecast`, `sweep`,
//! `uncertainty`, `ablate`, `diagnose`).
//!
//! A run directory looks like:
//!
//! ```text
//! <out>/<run id>/
//!     manifest.json      rewritten atomically on every task completion
//!     records.jsonl      one TaskRecord per line, append-only
//!     summary.csv        per (variant, strategy) means, written at the end
//!     failures/*.txt     raw model output of failed tasks
//! ```

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::eval::EvalError;

pub mod config;
mod runner;

pub use config::{
    builtin_context, parse_provider_arg, preset_names, DatasetConfig, RunConfig, RunSection,
    StrategyKind, StrategySection, SweepAxes, TimestampSetting, UncertaintySection, VariantPreset,
    VariantSection, WindowConfig,
};
pub use runner::{
    cmd_ablate, cmd_diagnose, cmd_forecast, cmd_sweep, cmd_uncertainty, AblationRow,
    DiagnoseReport, RunManifest, RunOptions, RunOutcome, SweepOutcome, SweepRow, TaskEntry,
    TaskRecord, TaskStatus, Totals, UncertaintyOutcome,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sweep grid has {size} points, above the cap of {cap}")]
    GridTooLarge { size: usize, cap: usize },
    #[error("run directory {0} does not exist or holds no records")]
    RunDirMissing(String),
    #[error("cannot serialize run state: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl RunError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
