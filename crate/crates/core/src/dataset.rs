//! Time series loading, chronological splitting, sliding windows and
//! missing-data corruption.
//!
//! Every series is handled channel-independently: a [`WindowInstance`] always
//! refers to exactly one channel of a [`SeriesFrame`].

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder rendered in place of masked values under [`MissingMode::NoneImp`].
pub const MISSING_TOKEN: &str = "None";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("column `{0}` not present in CSV header")]
    SchemaMismatch(String),
    #[error("timestamps not strictly increasing at data row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("cannot parse cell at data row {row}, column `{column}`: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error(
        "spacing {found_secs}s at data row {row} does not match the {expected} sampling interval"
    )]
    IrregularSpacing {
        row: usize,
        expected: Frequency,
        found_secs: i64,
    },
    #[error("unsupported sampling interval of {0} seconds")]
    UnsupportedFrequency(i64),
    #[error("frame has {rows} rows; at least 2 are needed to infer the sampling interval")]
    TooFewRows { rows: usize },
    #[error("split ratios must sum to 1 (got {0})")]
    InvalidRatios(f64),
    #[error("{part} split has {available} rows but {required} are required")]
    PartTooShort {
        part: SplitPart,
        required: usize,
        available: usize,
    },
    #[error("frame has {available} rows but lookback + horizon needs {required}")]
    FrameTooShort { required: usize, available: usize },
    #[error("window parameters must be positive (lookback={lookback}, horizon={horizon}, stride={stride})")]
    InvalidWindow {
        lookback: usize,
        horizon: usize,
        stride: usize,
    },
    #[error("channel index {0} out of range")]
    ChannelOutOfRange(usize),
    #[error("mask position {index} invalid for lookback of length {lookback}")]
    MaskOutOfRange { index: usize, lookback: usize },
    #[error("cannot mask {count} interior points of a lookback of length {lookback}")]
    MaskTooDense { count: usize, lookback: usize },
    #[error("window contains missing values, which the full-data condition does not allow")]
    MissingUnderFull,
}

/// Sampling interval of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frequency {
    #[serde(rename = "3s")]
    Seconds3,
    #[serde(rename = "15min")]
    Minutes15,
    #[serde(rename = "1h")]
    Hourly,
    #[serde(rename = "1d")]
    Daily,
}

impl Frequency {
    pub fn seconds(self) -> i64 {
        match self {
            Frequency::Seconds3 => 3,
            Frequency::Minutes15 => 15 * 60,
            Frequency::Hourly => 3600,
            Frequency::Daily => 86_400,
        }
    }

    pub fn step(self) -> TimeDelta {
        TimeDelta::seconds(self.seconds())
    }

    pub fn from_seconds(secs: i64) -> Result<Self, DatasetError> {
        match secs {
            3 => Ok(Frequency::Seconds3),
            900 => Ok(Frequency::Minutes15),
            3600 => Ok(Frequency::Hourly),
            86_400 => Ok(Frequency::Daily),
            other => Err(DatasetError::UnsupportedFrequency(other)),
        }
    }

    /// Human-readable description used in prompts.
    pub fn describe(self) -> &'static str {
        match self {
            Frequency::Seconds3 => "every 3 seconds",
            Frequency::Minutes15 => "every 15 minutes",
            Frequency::Hourly => "hourly",
            Frequency::Daily => "daily",
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Seconds3 => "3s",
            Frequency::Minutes15 => "15min",
            Frequency::Hourly => "1h",
            Frequency::Daily => "1d",
        })
    }
}

/// A loaded multivariate series in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub timestamps: Vec<NaiveDateTime>,
    pub channels: Vec<String>,
    /// Row-major, `timestamps.len()` rows by `channels.len()` columns.
    pub values: Vec<Vec<f64>>,
    pub frequency: Frequency,
    pub domain_note: String,
}

/// Which columns of a CSV file to load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    /// Channel columns to load; empty means every non-timestamp column.
    #[serde(default)]
    pub channel_columns: Vec<String>,
    /// chrono format string; when absent ISO-8601 and common variants are tried.
    #[serde(default)]
    pub timestamp_format: Option<String>,
    /// Declared sampling interval; inferred from the first gap when absent.
    #[serde(default)]
    pub frequency: Option<Frequency>,
    /// Keep empty cells as NaN instead of rejecting them.
    #[serde(default)]
    pub allow_empty_cells: bool,
    /// Accept gaps larger than the declared interval (e.g. trading calendars).
    #[serde(default)]
    pub allow_irregular: bool,
    #[serde(default)]
    pub domain_note: String,
}

impl CsvSchema {
    pub fn new(timestamp_column: impl Into<String>) -> Self {
        Self {
            timestamp_column: timestamp_column.into(),
            ..Self::default()
        }
    }

    pub fn with_channels<I, S>(mut self, channels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.channel_columns = channels.into_iter().map(Into::into).collect();
        self
    }
}

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

pub fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if let Some(fmt) = format {
        return NaiveDateTime::parse_from_str(raw, fmt).ok().or_else(|| {
            NaiveDate::parse_from_str(raw, fmt)
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        });
    }
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Loads a headered CSV file with one timestamp column and one column per channel.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesFrame, DatasetError> {
    let path = path.as_ref();
    let unreadable = |source| DatasetError::FileUnreadable {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(unreadable)?;
    parse_csv(&text, schema)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<SeriesFrame, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| DatasetError::UnparseableCell {
            row: 0,
            column: "<header>".into(),
            value: e.to_string(),
        })?
        .clone();
    let column_index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::SchemaMismatch(name.to_string()))
    };
    let ts_idx = column_index(&schema.timestamp_column)?;
    let channels: Vec<String> = if schema.channel_columns.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ts_idx)
            .map(|(_, h)| h.to_string())
            .collect()
    } else {
        schema.channel_columns.clone()
    };
    let channel_idx = channels
        .iter()
        .map(|c| column_index(c))
        .collect::<Result<Vec<_>, _>>()?;

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::UnparseableCell {
            row,
            column: "<record>".into(),
            value: e.to_string(),
        })?;
        let raw_ts = record.get(ts_idx).unwrap_or_default();
        let ts = parse_timestamp(raw_ts, schema.timestamp_format.as_deref()).ok_or_else(|| {
            DatasetError::UnparseableCell {
                row,
                column: schema.timestamp_column.clone(),
                value: raw_ts.to_string(),
            }
        })?;
        if let Some(prev) = timestamps.last() {
            if ts <= *prev {
                return Err(DatasetError::NonMonotoneTimestamps { row });
            }
        }
        timestamps.push(ts);

        let mut row_values = Vec::with_capacity(channel_idx.len());
        for (name, &ci) in channels.iter().zip(&channel_idx) {
            let cell = record.get(ci).unwrap_or_default();
            let value = if cell.is_empty() && schema.allow_empty_cells {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DatasetError::UnparseableCell {
                        row,
                        column: name.clone(),
                        value: cell.to_string(),
                    })?
            };
            row_values.push(value);
        }
        values.push(row_values);
    }

    let frequency = match schema.frequency {
        Some(f) => f,
        None => {
            if timestamps.len() < 2 {
                return Err(DatasetError::TooFewRows {
                    rows: timestamps.len(),
                });
            }
            Frequency::from_seconds((timestamps[1] - timestamps[0]).num_seconds())?
        }
    };
    for (row, pair) in timestamps.windows(2).enumerate() {
        let gap = (pair[1] - pair[0]).num_seconds();
        let ok = if schema.allow_irregular {
            gap >= frequency.seconds()
        } else {
            gap == frequency.seconds()
        };
        if !ok {
            return Err(DatasetError::IrregularSpacing {
                row: row + 1,
                expected: frequency,
                found_secs: gap,
            });
        }
    }

    Ok(SeriesFrame {
        timestamps,
        channels,
        values,
        frequency,
        domain_note: schema.domain_note.clone(),
    })
}

/// Names the three chronological partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl fmt::Display for SplitPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitPart::Train => "train",
            SplitPart::Validation => "validation",
            SplitPart::Test => "test",
        })
    }
}

/// Population mean and standard deviation of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl SeriesFrame {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, channel_id: usize) -> Result<Vec<f64>, DatasetError> {
        if channel_id >= self.width() {
            return Err(DatasetError::ChannelOutOfRange(channel_id));
        }
        Ok(self.values.iter().map(|row| row[channel_id]).collect())
    }

    /// Rows `[start, end)` as a new frame.
    pub fn slice(&self, start: usize, end: usize) -> SeriesFrame {
        SeriesFrame {
            timestamps: self.timestamps[start..end].to_vec(),
            channels: self.channels.clone(),
            values: self.values[start..end].to_vec(),
            frequency: self.frequency,
            domain_note: self.domain_note.clone(),
        }
    }

    /// Population statistics of one channel, ignoring NaN cells.
    pub fn channel_stats(&self, channel_id: usize) -> Result<ChannelStats, DatasetError> {
        let column: Vec<f64> = self
            .channel(channel_id)?
            .into_iter()
            .filter(|v| v.is_finite())
            .collect();
        let (mean, std) = crate::stats::mean_std(&column);
        Ok(ChannelStats { mean, std })
    }
}

/// Splits a frame into train/validation/test parts without shuffling.
///
/// Boundaries sit at `floor(T * ratio)` rows; the test part takes the remainder.
/// `min_rows` is the per-part minimum, normally `L + H`; pass 0 to waive it.
pub fn chronological_split(
    frame: &SeriesFrame,
    ratios: (f64, f64, f64),
    min_rows: usize,
) -> Result<(SeriesFrame, SeriesFrame, SeriesFrame), DatasetError> {
    let (train_r, val_r, test_r) = ratios;
    let total = train_r + val_r + test_r;
    if (total - 1.0).abs() > 1e-9 || [train_r, val_r, test_r].iter().any(|r| *r < 0.0) {
        return Err(DatasetError::InvalidRatios(total));
    }
    let rows = frame.len();
    // Absorb representation error such as 0.7 * 10 = 7.000000000000001 or 6.9999...
    let boundary = |r: f64| ((rows as f64) * r + 1e-9).floor() as usize;
    let n_train = boundary(train_r).min(rows);
    let n_val = boundary(val_r).min(rows - n_train);
    let parts = [
        (SplitPart::Train, 0, n_train),
        (SplitPart::Validation, n_train, n_train + n_val),
        (SplitPart::Test, n_train + n_val, rows),
    ];
    for (part, start, end) in parts {
        if end - start < min_rows {
            return Err(DatasetError::PartTooShort {
                part,
                required: min_rows,
                available: end - start,
            });
        }
    }
    Ok((
        frame.slice(0, n_train),
        frame.slice(n_train, n_train + n_val),
        frame.slice(n_train + n_val, rows),
    ))
}

/// One univariate forecasting task cut from a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInstance {
    pub channel_id: usize,
    pub lookback_values: Vec<f64>,
    pub lookback_timestamps: Vec<NaiveDateTime>,
    pub horizon_timestamps: Vec<NaiveDateTime>,
    pub truth: Vec<f64>,
    /// Row of the first horizon step in the source frame.
    pub origin_index: usize,
}

impl WindowInstance {
    pub fn lookback(&self) -> usize {
        self.lookback_values.len()
    }

    pub fn horizon(&self) -> usize {
        self.truth.len()
    }
}

/// Number of windows [`slide_windows`] yields for the given shape.
pub fn window_count(rows: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if rows < lookback + horizon || stride == 0 {
        0
    } else {
        (rows - lookback - horizon) / stride + 1
    }
}

/// Cuts lookback/horizon windows for one channel at origins `L, L+stride, ...`.
pub fn slide_windows(
    frame: &SeriesFrame,
    lookback: usize,
    horizon: usize,
    stride: usize,
    channel_id: usize,
) -> Result<Vec<WindowInstance>, DatasetError> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(DatasetError::InvalidWindow {
            lookback,
            horizon,
            stride,
        });
    }
    if frame.len() < lookback + horizon {
        return Err(DatasetError::FrameTooShort {
            required: lookback + horizon,
            available: frame.len(),
        });
    }
    let column = frame.channel(channel_id)?;
    Ok((lookback..=frame.len() - horizon)
        .step_by(stride)
        .map(|origin| WindowInstance {
            channel_id,
            lookback_values: column[origin - lookback..origin].to_vec(),
            lookback_timestamps: frame.timestamps[origin - lookback..origin].to_vec(),
            horizon_timestamps: frame.timestamps[origin..origin + horizon].to_vec(),
            truth: column[origin..origin + horizon].to_vec(),
            origin_index: origin,
        })
        .collect())
}

/// Positions of a lookback treated as missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingMask {
    pub indices: BTreeSet<usize>,
    pub seed: u64,
    /// Fraction in `[0, 1)`, stored as parts per million to keep the type `Eq`.
    pub rate_ppm: u32,
}

impl MissingMask {
    /// Draws `round(rate * L)` interior positions with a seeded generator.
    /// Endpoints are never masked so linear interpolation is always defined.
    pub fn generate(lookback: usize, rate: f64, seed: u64) -> Result<Self, DatasetError> {
        let count = (rate.clamp(0.0, 1.0) * lookback as f64).round() as usize;
        let interior = lookback.saturating_sub(2);
        if count > interior {
            return Err(DatasetError::MaskTooDense { count, lookback });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices = rand::seq::index::sample(&mut rng, interior, count)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        Ok(Self {
            indices,
            seed,
            rate_ppm: (rate * 1e6).round() as u32,
        })
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self {
            indices: indices.into_iter().collect(),
            seed: 0,
            rate_ppm: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        f64::from(self.rate_ppm) / 1e6
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn validate(&self, lookback: usize) -> Result<(), DatasetError> {
        match self.indices.iter().find(|&&i| i == 0 || i + 1 >= lookback) {
            Some(&index) => Err(DatasetError::MaskOutOfRange { index, lookback }),
            None => Ok(()),
        }
    }
}

/// How masked lookback points are presented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    /// Complete data; the mask is ignored.
    #[default]
    Full,
    /// Masked points are deleted, survivors keep their timestamps.
    NoImp,
    /// Masked values are replaced with a `None` token.
    NoneImp,
    /// Masked values are linearly interpolated from observed neighbours.
    LinImp,
}

impl MissingMode {
    pub fn label(self) -> &'static str {
        match self {
            MissingMode::Full => "full",
            MissingMode::NoImp => "no_imp",
            MissingMode::NoneImp => "none_imp",
            MissingMode::LinImp => "lin_imp",
        }
    }
}

/// One lookback point as the model will see it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub timestamp: NaiveDateTime,
    /// `None` renders as the missing-value token.
    pub value: Option<f64>,
}

/// A window after the missing-data policy has been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedWindow {
    pub channel_id: usize,
    pub origin_index: usize,
    pub lookback: Vec<ObservedPoint>,
    pub horizon_timestamps: Vec<NaiveDateTime>,
}

impl ObservedWindow {
    pub fn horizon(&self) -> usize {
        self.horizon_timestamps.len()
    }

    /// Observed numeric values, skipping placeholders.
    pub fn observed_values(&self) -> Vec<f64> {
        self.lookback.iter().filter_map(|p| p.value).collect()
    }
}

/// Applies a missing-data variant to a window's lookback.
pub fn apply_missing(
    window: &WindowInstance,
    mode: MissingMode,
    mask: &MissingMask,
) -> Result<ObservedWindow, DatasetError> {
    let len = window.lookback();
    let points = window
        .lookback_timestamps
        .iter()
        .zip(&window.lookback_values);
    let lookback: Vec<ObservedPoint> = match mode {
        MissingMode::Full => {
            if window.lookback_values.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::MissingUnderFull);
            }
            points
                .map(|(&timestamp, &v)| ObservedPoint {
                    timestamp,
                    value: Some(v),
                })
                .collect()
        }
        MissingMode::NoImp => {
            mask.validate(len)?;
            points
                .enumerate()
                .filter(|(i, _)| !mask.indices.contains(i))
                .map(|(_, (&timestamp, &v))| ObservedPoint {
                    timestamp,
                    value: Some(v),
                })
                .collect()
        }
        MissingMode::NoneImp => {
            mask.validate(len)?;
            points
                .enumerate()
                .map(|(i, (&timestamp, &v))| ObservedPoint {
                    timestamp,
                    value: (!mask.indices.contains(&i)).then_some(v),
                })
                .collect()
        }
        MissingMode::LinImp => {
            mask.validate(len)?;
            let filled = interpolate_masked(&window.lookback_values, &mask.indices);
            window
                .lookback_timestamps
                .iter()
                .zip(filled)
                .map(|(&timestamp, v)| ObservedPoint {
                    timestamp,
                    value: Some(v),
                })
                .collect()
        }
    };
    Ok(ObservedWindow {
        channel_id: window.channel_id,
        origin_index: window.origin_index,
        lookback,
        horizon_timestamps: window.horizon_timestamps.clone(),
    })
}

/// Replaces masked positions with the line through the nearest observed neighbours.
/// Endpoints must be unmasked.
fn interpolate_masked(values: &[f64], masked: &BTreeSet<usize>) -> Vec<f64> {
    let mut out = values.to_vec();
    let observed: Vec<usize> = (0..values.len()).filter(|i| !masked.contains(i)).collect();
    for pair in observed.windows(2) {
        let (left, right) = (pair[0], pair[1]);
        let span = (right - left) as f64;
        for (i, slot) in out.iter_mut().enumerate().take(right).skip(left + 1) {
            let w = (i - left) as f64 / span;
            *slot = values[left] * (1.0 - w) + values[right] * w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hourly(n: usize) -> Vec<NaiveDateTime> {
        let start = NaiveDate::from_ymd_opt(2016, 7, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        (0..n).map(|i| start + TimeDelta::hours(i as i64)).collect()
    }

    fn frame(values: &[f64]) -> SeriesFrame {
        SeriesFrame {
            timestamps: hourly(values.len()),
            channels: vec!["OT".into()],
            values: values.iter().map(|v| vec![*v]).collect(),
            frequency: Frequency::Hourly,
            domain_note: String::new(),
        }
    }

    fn window(values: &[f64]) -> WindowInstance {
        WindowInstance {
            channel_id: 0,
            lookback_values: values.to_vec(),
            lookback_timestamps: hourly(values.len()),
            horizon_timestamps: vec![],
            truth: vec![],
            origin_index: values.len(),
        }
    }

    #[test]
    fn three_row_csv() {
        let csv =
            "date,OT\n2016-07-01 00:00:00,1.0\n2016-07-01 01:00:00,2.0\n2016-07-01 02:00:00,3.0\n";
        let f = parse_csv(csv, &CsvSchema::new("date")).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.width(), 1);
        assert_eq!(f.frequency, Frequency::Hourly);
        assert_eq!(f.channel(0).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let csv = "date,OT\n2016-07-01 00:00:00,1\n2016-07-01 00:00:00,2\n";
        assert!(matches!(
            parse_csv(csv, &CsvSchema::new("date")),
            Err(DatasetError::NonMonotoneTimestamps { row: 1 })
        ));
    }

    #[test]
    fn csv_errors() {
        let csv = "date,OT\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,x\n";
        assert!(matches!(
            parse_csv(csv, &CsvSchema::new("date")),
            Err(DatasetError::UnparseableCell { row: 1, .. })
        ));
        assert!(matches!(
            parse_csv(csv, &CsvSchema::new("timestamp")),
            Err(DatasetError::SchemaMismatch(_))
        ));
        let empty = "date,OT\n2016-07-01 00:00:00,1\n2016-07-01 01:00:00,\n";
        assert!(parse_csv(empty, &CsvSchema::new("date")).is_err());
        let mut lenient = CsvSchema::new("date");
        lenient.allow_empty_cells = true;
        assert!(parse_csv(empty, &lenient).unwrap().values[1][0].is_nan());
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &CsvSchema::new("date")),
            Err(DatasetError::FileUnreadable { .. })
        ));
    }

    #[test]
    fn iso_t_separator_and_gaps() {
        let csv = "date,OT\n2016-07-01T00:00:00,1\n2016-07-01T00:15:00,2\n2016-07-01T00:45:00,3\n";
        assert!(matches!(
            parse_csv(csv, &CsvSchema::new("date")),
            Err(DatasetError::IrregularSpacing { row: 2, .. })
        ));
    }

    #[test]
    fn split_small() {
        let f = frame(&(0..10).map(f64::from).collect::<Vec<_>>());
        let (a, b, c) = chronological_split(&f, (0.7, 0.1, 0.2), 0).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
        assert!(matches!(
            chronological_split(&frame(&[0.0; 100]), (0.5, 0.5, 0.1), 0),
            Err(DatasetError::InvalidRatios(_))
        ));
        assert!(matches!(
            chronological_split(&f, (0.7, 0.1, 0.2), 3),
            Err(DatasetError::PartTooShort {
                part: SplitPart::Validation,
                ..
            })
        ));
    }

    #[test]
    fn split_matches_floor_arithmetic() {
        // Oracle: integer floor of T * (7/10), T * (1/10).
        let t = 17_420usize;
        let f = frame(&vec![0.0; t]);
        let (a, b, c) = chronological_split(&f, (0.7, 0.1, 0.2), 0).unwrap();
        let train = t * 7 / 10;
        let val = t / 10;
        assert_eq!((train, val, t - train - val), (12_194, 1_742, 3_484));
        assert_eq!((a.len(), b.len(), c.len()), (12_194, 1_742, 3_484));
    }

    #[test]
    fn windows_by_hand() {
        let f = frame(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let ws = slide_windows(&f, 2, 1, 1, 0).unwrap();
        assert_eq!(
            ws.iter().map(|w| w.origin_index).collect::<Vec<_>>(),
            vec![2, 3, 4]
        );
        assert_eq!(ws[0].lookback_values, vec![0.0, 1.0]);
        assert_eq!(ws[0].truth, vec![2.0]);
        assert!(matches!(
            slide_windows(&frame(&[0.0; 3]), 2, 2, 1, 0),
            Err(DatasetError::FrameTooShort { .. })
        ));
        assert_eq!(
            slide_windows(&frame(&[0.0; 192]), 96, 96, 96, 0)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn window_timestamps_are_contiguous() {
        let f = frame(&[0.0; 20]);
        for w in slide_windows(&f, 5, 3, 2, 0).unwrap() {
            let gap = w.horizon_timestamps[0] - *w.lookback_timestamps.last().unwrap();
            assert_eq!(gap, Frequency::Hourly.step());
            assert_eq!(w.lookback(), 5);
            assert_eq!(w.horizon(), 3);
        }
    }

    #[test]
    fn missing_variants() {
        let w = window(&[1.0, 9.9, 3.0]);
        let mask = MissingMask::from_indices([1]);
        let lin = apply_missing(&w, MissingMode::LinImp, &mask).unwrap();
        assert_eq!(
            lin.lookback
                .iter()
                .map(|p| p.value.unwrap())
                .collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0]
        );
        let none = apply_missing(&w, MissingMode::NoneImp, &mask).unwrap();
        assert_eq!(
            none.lookback.iter().map(|p| p.value).collect::<Vec<_>>(),
            vec![Some(1.0), None, Some(3.0)]
        );
        let no = apply_missing(&w, MissingMode::NoImp, &mask).unwrap();
        assert_eq!(no.lookback.len(), 2);
        assert_eq!(no.lookback[0].timestamp, w.lookback_timestamps[0]);
        assert_eq!(no.lookback[1].timestamp, w.lookback_timestamps[2]);
        assert_eq!(no.lookback[1].value, Some(3.0));

        let full = apply_missing(&w, MissingMode::Full, &MissingMask::from_indices([7])).unwrap();
        assert_eq!(full.observed_values(), w.lookback_values);
    }

    #[test]
    fn mask_out_of_range() {
        let w = window(&[1.0, 2.0, 3.0]);
        for idx in [0, 2, 5] {
            assert!(matches!(
                apply_missing(&w, MissingMode::LinImp, &MissingMask::from_indices([idx])),
                Err(DatasetError::MaskOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn generated_mask_shape() {
        let m = MissingMask::generate(96, 0.2, 42).unwrap();
        assert_eq!(m.len(), 19);
        assert!(m.indices.iter().all(|&i| i > 0 && i < 95));
        assert_eq!(m, MissingMask::generate(96, 0.2, 42).unwrap());
        assert!((m.rate() - 0.2).abs() < 1e-9);
        assert!(MissingMask::generate(3, 0.9, 0).is_err());
    }

    #[test]
    fn consecutive_masked_points_interpolate() {
        let w = window(&[0.0, 100.0, 100.0, 100.0, 8.0]);
        let lin = apply_missing(
            &w,
            MissingMode::LinImp,
            &MissingMask::from_indices([1, 2, 3]),
        )
        .unwrap();
        assert_eq!(lin.observed_values(), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
    }
}
