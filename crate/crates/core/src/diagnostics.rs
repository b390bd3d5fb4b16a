//! Detectors for four forecast failure modes: constant collapse, copy-paste
//! of a lookback segment, phase shift, and peak clipping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{mean_std, pearson};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("lookback has zero spread")]
    DegenerateLookback,
    #[error("prediction ({pred}) is longer than the lookback ({lookback})")]
    PredTooLong { pred: usize, lookback: usize },
    #[error("input series is constant")]
    ConstantInput,
    #[error("truth is constant")]
    ConstantTruth,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Detector thresholds. Defaults are recorded alongside every diagnosis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Collapse when `std(pred) / std(lookback)` falls below this.
    pub collapse_ratio: f64,
    /// Minimum correlation with a lookback segment for copy-paste.
    pub copy_similarity: f64,
    /// Max pointwise deviation from the copied segment, as a fraction of the lookback range.
    pub copy_tolerance: f64,
    /// Largest lag searched; `None` means `H / 4`.
    pub max_lag: Option<usize>,
    pub phase_corr: f64,
    /// Required gain of the best lag's correlation over lag 0.
    pub phase_margin: f64,
    /// Clipping when the amplitude ratio falls below this.
    pub amplitude_ratio: f64,
    /// Minimum shape correlation for clipping.
    pub clip_corr: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            collapse_ratio: 0.05,
            copy_similarity: 0.99,
            copy_tolerance: 0.01,
            max_lag: None,
            phase_corr: 0.8,
            phase_margin: 0.1,
            amplitude_ratio: 0.7,
            clip_corr: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakClipping {
    pub flagged: bool,
    /// `1 - min(amplitude ratio, 1)`.
    pub severity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseShift {
    pub flagged: bool,
    /// Positive when the prediction lags behind the truth.
    pub lag: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CopyPaste {
    pub flagged: bool,
    pub offset: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstantCollapse {
    pub flagged: bool,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnosis {
    pub peak_clipping: PeakClipping,
    pub phase_shift: PhaseShift,
    pub copy_paste: CopyPaste,
    pub constant_collapse: ConstantCollapse,
}

impl Diagnosis {
    pub fn any_flag(&self) -> bool {
        self.peak_clipping.flagged
            || self.phase_shift.flagged
            || self.copy_paste.flagged
            || self.constant_collapse.flagged
    }

    /// Flagged mode names in a fixed order.
    pub fn flagged_modes(&self) -> Vec<&'static str> {
        [
            ("constant_collapse", self.constant_collapse.flagged),
            ("copy_paste", self.copy_paste.flagged),
            ("phase_shift", self.phase_shift.flagged),
            ("peak_clipping", self.peak_clipping.flagged),
        ]
        .into_iter()
        .filter_map(|(name, on)| on.then_some(name))
        .collect()
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<(), DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

pub fn detect_constant_collapse(
    pred: &[f64],
    lookback: &[f64],
    ratio_threshold: f64,
) -> Result<ConstantCollapse, DiagnosticsError> {
    let (_, lookback_std) = mean_std(lookback);
    if !(lookback_std > 0.0) {
        return Err(DiagnosticsError::DegenerateLookback);
    }
    let ratio = mean_std(pred).1 / lookback_std;
    Ok(ConstantCollapse {
        flagged: ratio < ratio_threshold,
        ratio,
    })
}

/// Best-correlated lookback segment of the prediction's length; flagged only
/// when the segment also matches pointwise within `tolerance * range(lookback)`.
pub fn detect_copy_paste(
    pred: &[f64],
    lookback: &[f64],
    sim_threshold: f64,
    tolerance: f64,
) -> Result<CopyPaste, DiagnosticsError> {
    let h = pred.len();
    if h > lookback.len() {
        return Err(DiagnosticsError::PredTooLong {
            pred: h,
            lookback: lookback.len(),
        });
    }
    if h == 0 || !(mean_std(pred).1 > 0.0) {
        return Ok(CopyPaste::default());
    }
    let max_dev = |offset: usize| {
        pred.iter()
            .zip(&lookback[offset..offset + h])
            .map(|(p, l)| (p - l).abs())
            .fold(0.0, f64::max)
    };
    // Periodic lookbacks can hold several equally correlated segments at
    // different levels; among those above the threshold the closest one counts.
    let mut best_corr: Option<(usize, f64)> = None;
    let mut best_match: Option<(usize, f64, f64)> = None;
    for offset in 0..=lookback.len() - h {
        let Some(c) = pearson(pred, &lookback[offset..offset + h]) else {
            continue;
        };
        if best_corr.is_none_or(|(_, b)| c > b) {
            best_corr = Some((offset, c));
        }
        if c >= sim_threshold {
            let dev = max_dev(offset);
            if best_match.is_none_or(|(_, _, d)| dev < d) {
                best_match = Some((offset, c, dev));
            }
        }
    }
    let limit = tolerance * spread(lookback);
    Ok(match (best_match, best_corr) {
        (Some((offset, similarity, dev)), _) if dev <= limit => CopyPaste {
            flagged: true,
            offset,
            similarity,
        },
        (_, Some((offset, similarity))) => CopyPaste {
            flagged: false,
            offset,
            similarity,
        },
        (_, None) => CopyPaste::default(),
    })
}

/// Correlation of `pred[t + lag]` with `truth[t]` over the overlap.
pub fn lagged_correlation(pred: &[f64], truth: &[f64], lag: i64) -> Option<f64> {
    let n = pred.len() as i64;
    if lag.abs() >= n {
        return None;
    }
    let (p, t) = if lag >= 0 {
        let l = lag as usize;
        (&pred[l..], &truth[..truth.len() - l])
    } else {
        let l = (-lag) as usize;
        (&pred[..pred.len() - l], &truth[l..])
    };
    pearson(p, t)
}

pub fn detect_phase_shift(
    pred: &[f64],
    truth: &[f64],
    max_lag: usize,
    corr_threshold: f64,
    margin: f64,
) -> Result<PhaseShift, DiagnosticsError> {
    same_len(pred, truth)?;
    if !(mean_std(pred).1 > 0.0) || !(mean_std(truth).1 > 0.0) {
        return Err(DiagnosticsError::ConstantInput);
    }
    let max_lag = max_lag.min(pred.len().saturating_sub(2)) as i64;
    let at_zero = lagged_correlation(pred, truth, 0).unwrap_or(-1.0);
    let mut best = (0i64, at_zero);
    for lag in -max_lag..=max_lag {
        if let Some(c) = lagged_correlation(pred, truth, lag) {
            // Prefer the smallest |lag| on ties.
            if c > best.1 + 1e-12 || (c >= best.1 - 1e-12 && lag.abs() < best.0.abs()) {
                best = (lag, c);
            }
        }
    }
    let (lag, corr) = best;
    Ok(PhaseShift {
        flagged: lag != 0 && corr >= corr_threshold && corr - at_zero >= margin,
        lag,
    })
}

pub fn detect_peak_clipping(
    pred: &[f64],
    truth: &[f64],
    amp_threshold: f64,
    min_corr: f64,
) -> Result<PeakClipping, DiagnosticsError> {
    same_len(pred, truth)?;
    let truth_range = spread(truth);
    if !(truth_range > 0.0) {
        return Err(DiagnosticsError::ConstantTruth);
    }
    let ratio = spread(pred) / truth_range;
    let tracks_shape = pearson(pred, truth).is_some_and(|c| c >= min_corr);
    Ok(PeakClipping {
        flagged: ratio < amp_threshold && tracks_shape,
        severity: 1.0 - ratio.min(1.0),
    })
}

/// Runs every detector. Constant collapse takes precedence over copy-paste.
pub fn diagnose(
    pred: &[f64],
    lookback: &[f64],
    truth: &[f64],
    thresholds: &Thresholds,
) -> Result<Diagnosis, DiagnosticsError> {
    same_len(pred, truth)?;
    let constant_collapse = detect_constant_collapse(pred, lookback, thresholds.collapse_ratio)?;
    let copy_paste = if constant_collapse.flagged {
        CopyPaste::default()
    } else {
        detect_copy_paste(
            pred,
            lookback,
            thresholds.copy_similarity,
            thresholds.copy_tolerance,
        )?
    };
    let max_lag = thresholds.max_lag.unwrap_or(pred.len() / 4);
    let phase_shift = match detect_phase_shift(
        pred,
        truth,
        max_lag,
        thresholds.phase_corr,
        thresholds.phase_margin,
    ) {
        Ok(p) => p,
        Err(DiagnosticsError::ConstantInput) if mean_std(truth).1 > 0.0 => PhaseShift::default(),
        Err(e) => return Err(e),
    };
    let peak_clipping = detect_peak_clipping(
        pred,
        truth,
        thresholds.amplitude_ratio,
        thresholds.clip_corr,
    )?;
    Ok(Diagnosis {
        peak_clipping,
        phase_shift,
        copy_paste,
        constant_collapse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, period: f64, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (i as f64 - phase) / period).sin())
            .collect()
    }

    #[test]
    fn collapse_examples() {
        let lookback = sine(48, 12.0, 0.0);
        let c = detect_constant_collapse(&[5.0; 8], &lookback, 0.05).unwrap();
        assert!(c.flagged && c.ratio == 0.0);
        let tail = &lookback[40..];
        let c = detect_constant_collapse(tail, tail, 0.05).unwrap();
        assert!(!c.flagged && (c.ratio - 1.0).abs() < 1e-12);
        let small: Vec<f64> = lookback.iter().map(|v| v * 0.04).collect();
        assert!(
            detect_constant_collapse(&small, &lookback, 0.05)
                .unwrap()
                .flagged
        );
        assert_eq!(
            detect_constant_collapse(&[1.0], &[2.0, 2.0], 0.05),
            Err(DiagnosticsError::DegenerateLookback)
        );
    }

    #[test]
    fn copy_examples() {
        let lookback: Vec<f64> = (0..40)
            .map(|i| ((i * 37) % 11) as f64 + 0.1 * i as f64)
            .collect();
        let pred = lookback[30..].to_vec();
        let c = detect_copy_paste(&pred, &lookback, 0.99, 0.01).unwrap();
        assert!(c.flagged);
        assert_eq!(c.offset, 30);
        assert!((c.similarity - 1.0).abs() < 1e-12);

        let shifted: Vec<f64> = pred.iter().map(|v| v + 50.0).collect();
        let c = detect_copy_paste(&shifted, &lookback, 0.99, 0.01).unwrap();
        assert!(c.similarity > 0.99 && !c.flagged);

        assert!(matches!(
            detect_copy_paste(&lookback, &pred, 0.99, 0.01),
            Err(DiagnosticsError::PredTooLong { .. })
        ));
        assert!(
            !detect_copy_paste(&[3.0; 4], &lookback, 0.99, 0.01)
                .unwrap()
                .flagged
        );
    }

    #[test]
    fn phase_examples() {
        let truth = sine(96, 48.0, 0.0);
        let pred = sine(96, 48.0, 5.0);
        let p = detect_phase_shift(&pred, &truth, 10, 0.8, 0.1).unwrap();
        assert_eq!(p.lag, 5);
        assert!(p.flagged);
        let p = detect_phase_shift(&truth, &truth, 10, 0.8, 0.1).unwrap();
        assert_eq!(
            p,
            PhaseShift {
                flagged: false,
                lag: 0
            }
        );
        assert_eq!(
            detect_phase_shift(&[1.0; 4], &truth[..4], 1, 0.8, 0.1),
            Err(DiagnosticsError::ConstantInput)
        );
    }

    #[test]
    fn clipping_examples() {
        let truth: Vec<f64> = sine(96, 24.0, 0.0).iter().map(|v| 10.0 + 3.0 * v).collect();
        let m = crate::stats::mean(&truth);
        let pred: Vec<f64> = truth.iter().map(|t| 0.5 * (t - m) + m).collect();
        let c = detect_peak_clipping(&pred, &truth, 0.7, 0.5).unwrap();
        assert!(c.flagged);
        assert!((c.severity - 0.5).abs() < 1e-12);
        assert!(
            !detect_peak_clipping(&truth, &truth, 0.7, 0.5)
                .unwrap()
                .flagged
        );
        assert!(
            !detect_peak_clipping(&[m; 96], &truth, 0.7, 0.5)
                .unwrap()
                .flagged
        );
        assert_eq!(
            detect_peak_clipping(&truth, &[1.0; 96], 0.7, 0.5),
            Err(DiagnosticsError::ConstantTruth)
        );
    }
}
