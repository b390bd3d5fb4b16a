//! Synthetic series in the ETT file layout, for examples, tests and offline
//! demos when the real benchmark files are not at hand.

use chrono::{NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Frequency;

/// Column names of the ETT files.
pub const ETT_COLUMNS: [&str; 7] = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"];

/// Shape of a generated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub rows: usize,
    /// Number of channels, taken from the front of [`ETT_COLUMNS`] and
    /// always ending with `OT`.
    pub channels: usize,
    pub frequency: Frequency,
    /// Seasonal period in rows.
    pub period: usize,
    /// Standard deviation of additive Gaussian noise; 0 gives an exactly
    /// periodic series.
    pub noise: f64,
    /// Added per row.
    pub trend: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 1000,
            channels: 1,
            frequency: Frequency::Hourly,
            period: 24,
            noise: 0.0,
            trend: 0.0,
            seed: 0,
        }
    }
}

/// First timestamp of the ETT files.
pub fn ett_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2016, 7, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

fn channel_names(n: usize) -> Vec<&'static str> {
    let n = n.clamp(1, ETT_COLUMNS.len());
    let mut names: Vec<&str> = ETT_COLUMNS[..n - 1].to_vec();
    names.push("OT");
    names
}

/// Renders a headered CSV with a `date` column followed by the channels.
///
/// Channel `c` is `10 + 2c + (3 + c) sin(2π t / period + c) + trend·t + noise`.
pub fn ett_csv(spec: &SynthSpec) -> String {
    let names = channel_names(spec.channels);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite sigma");
    let mut out = format!("date,{}\n", names.join(","));
    let step = spec.frequency.step();
    let period = spec.period.max(1) as f64;
    for t in 0..spec.rows {
        let ts = ett_start() + step * t as i32;
        out.push_str(&ts.format("%Y-%m-%d %H:%M:%S").to_string());
        for c in 0..names.len() {
            let cf = c as f64;
            let phase = std::f64::consts::TAU * t as f64 / period + cf;
            let mut v = 10.0 + 2.0 * cf + (3.0 + cf) * phase.sin() + spec.trend * t as f64;
            if spec.noise > 0.0 {
                v += noise.sample(&mut rng);
            }
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes [`ett_csv`] to `path`.
pub fn write_ett_csv(path: impl AsRef<std::path::Path>, spec: &SynthSpec) -> std::io::Result<()> {
    std::fs::write(path, ett_csv(spec))
}
