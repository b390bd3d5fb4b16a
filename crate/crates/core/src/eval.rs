//! Metrics, uncertainty bands and the reasoning-length heatmap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::Diagnosis;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("metric inputs must be non-empty")]
    Empty,
    #[error("non-finite value in metric input")]
    NonFinite,
    #[error("no records to aggregate")]
    EmptyGroup,
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },
    #[error("need at least 10 records, got {0}")]
    TooFewRecords(usize),
    #[error("band level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
}

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Score of one (window, channel) task, or its failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub origin_index: usize,
    pub channel_id: usize,
    pub strategy: String,
    pub variant: String,
    /// `None` when the task failed.
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub cot_tokens: u64,
    pub repairs: Vec<String>,
    pub diagnosis: Option<Diagnosis>,
    pub failure: Option<String>,
}

/// Identifies the task an [`EvalRecord`] scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLabel {
    pub dataset: String,
    pub origin_index: usize,
    pub channel_id: usize,
    pub strategy: String,
    pub variant: String,
}

impl EvalRecord {
    pub fn scored(
        label: TaskLabel,
        pred: &[f64],
        truth: &[f64],
        cot_tokens: u64,
        repairs: Vec<String>,
        diagnosis: Option<Diagnosis>,
    ) -> Result<Self, EvalError> {
        let mse = mse(pred, truth)?;
        let mae = mae(pred, truth)?;
        debug_assert!(mae * mae <= mse * (1.0 + 1e-12) + 1e-300);
        Ok(Self {
            dataset: label.dataset,
            origin_index: label.origin_index,
            channel_id: label.channel_id,
            strategy: label.strategy,
            variant: label.variant,
            mse: Some(mse),
            mae: Some(mae),
            cot_tokens,
            repairs,
            diagnosis,
            failure: None,
        })
    }

    pub fn failed(label: TaskLabel, reason: impl Into<String>) -> Self {
        Self {
            dataset: label.dataset,
            origin_index: label.origin_index,
            channel_id: label.channel_id,
            strategy: label.strategy,
            variant: label.variant,
            mse: None,
            mae: None,
            cot_tokens: 0,
            repairs: Vec::new(),
            diagnosis: None,
            failure: Some(reason.into()),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }
}

/// One row of a dataset summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub strategy: String,
    /// Mean over successful tasks; `None` when every task failed.
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    /// Number of successful tasks.
    pub count: usize,
    pub failure_rate: f64,
}

/// Unweighted means per (variant, strategy), failures excluded from the means.
pub fn aggregate_dataset(records: &[EvalRecord]) -> Result<Vec<SummaryRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyGroup);
    }
    let mut groups: BTreeMap<(String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.variant.clone(), r.strategy.clone()))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((variant, strategy), group)| {
            let ok: Vec<&EvalRecord> = group.iter().copied().filter(|r| !r.is_failure()).collect();
            let mean_of = |f: fn(&EvalRecord) -> Option<f64>| {
                (!ok.is_empty())
                    .then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
            };
            SummaryRow {
                variant,
                strategy,
                mse: mean_of(|r| r.mse),
                mae: mean_of(|r| r.mae),
                count: ok.len(),
                failure_rate: (group.len() - ok.len()) as f64 / group.len() as f64,
            }
        })
        .collect())
}

/// Renders summary rows as CSV.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("variant,strategy,mse,mae,count,failure_rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant,
            r.strategy,
            fmt_opt(r.mse),
            fmt_opt(r.mae),
            r.count,
            r.failure_rate
        ));
    }
    out
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Empirical quantile of sorted data, interpolating between order statistics
/// at 1-based position `h = (k - 1) p + 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let k = sorted.len();
    let pos = (k - 1) as f64 * p;
    // Snap representation error so that e.g. 9 * 0.1 lands on 0.9 exactly.
    let pos = (pos * 1e9).round() / 1e9;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= k || frac == 0.0 {
        return sorted[lo.min(k - 1)];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize, EvalError> {
    if samples.len() < 2 {
        return Err(EvalError::TooFewSamples {
            required: 2,
            found: samples.len(),
        });
    }
    let horizon = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != horizon) {
        return Err(EvalError::LengthMismatch {
            left: horizon,
            right: bad.len(),
        });
    }
    Ok(horizon)
}

/// Per-step quantile band at level `level` over `k` sample paths.
pub fn quantile_band(samples: &[Vec<f64>], level: f64) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let horizon = check_samples(samples)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidLevel(level));
    }
    let p_lo = (1.0 - level) / 2.0;
    let p_hi = (1.0 + level) / 2.0;
    let mut lower = Vec::with_capacity(horizon);
    let mut upper = Vec::with_capacity(horizon);
    let mut column = Vec::with_capacity(samples.len());
    for step in 0..horizon {
        column.clear();
        column.extend(samples.iter().map(|s| s[step]));
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, p_lo));
        upper.push(quantile_sorted(&column, p_hi));
    }
    Ok((lower, upper))
}

/// Population std across samples at each step.
pub fn per_step_std(samples: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    check_samples(samples)?;
    Ok(crate::engine::aggregate(samples).1)
}

/// Fraction of steps where `lower <= truth <= upper`.
pub fn band_coverage(lower: &[f64], upper: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if lower.len() != truth.len() || upper.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: lower.len().max(upper.len()),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let inside = truth
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

/// Per-step uncertainty summary of repeated generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub level: f64,
    pub mean: Vec<f64>,
    pub per_step_std: Vec<f64>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    /// Fraction of truth points inside the band.
    pub coverage: f64,
}

impl UncertaintyReport {
    pub fn new(samples: &[Vec<f64>], level: f64, truth: &[f64]) -> Result<Self, EvalError> {
        let (band_lower, band_upper) = quantile_band(samples, level)?;
        let (mean, per_step_std) = crate::engine::aggregate(samples);
        let coverage = band_coverage(&band_lower, &band_upper, truth)?;
        Ok(Self {
            level,
            mean,
            per_step_std,
            band_lower,
            band_upper,
            coverage,
        })
    }

    /// `step,mean,lower,upper,std,truth` rows.
    pub fn to_csv(&self, truth: &[f64]) -> String {
        let mut out = String::from("step,mean,lower,upper,std,truth\n");
        for i in 0..self.mean.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                self.mean[i],
                self.band_lower[i],
                self.band_upper[i],
                self.per_step_std[i],
                truth.get(i).map(|t| t.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Bin of each item when sorted ascending (stable) into 10 equal-count bins.
fn decile_bins<T: PartialOrd + Copy>(keys: &[T]) -> Vec<usize> {
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .partial_cmp(&keys[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut bins = vec![0; n];
    for (rank, idx) in order.into_iter().enumerate() {
        bins[idx] = rank * 10 / n;
    }
    bins
}

/// 10x10 counts: row = reasoning-length decile (0 = shortest), column = MSE
/// rank bin (0 = best). Ties keep input order.
pub fn cot_decile_heatmap(records: &[(u64, f64)]) -> Result<[[usize; 10]; 10], EvalError> {
    if records.len() < 10 {
        return Err(EvalError::TooFewRecords(records.len()));
    }
    let tokens: Vec<u64> = records.iter().map(|r| r.0).collect();
    let errors: Vec<f64> = records.iter().map(|r| r.1).collect();
    let rows = decile_bins(&tokens);
    let cols = decile_bins(&errors);
    let mut grid = [[0usize; 10]; 10];
    for (r, c) in rows.into_iter().zip(cols) {
        grid[r][c] += 1;
    }
    Ok(grid)
}

pub fn heatmap_csv(grid: &[[usize; 10]; 10]) -> String {
    let mut out = String::from("cot_decile");
    for c in 1..=10 {
        out.push_str(&format!(",mse_rank_{c}"));
    }
    out.push('\n');
    for (d, row) in grid.iter().enumerate() {
        out.push_str(&(d + 1).to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
