// The four failure-mode detectors on constructed forecasts, then an offline
// `diagnose` pass over a run whose model only ever answers with a constant.
//
// `cargo run --example failure_diagnostics`

use std::error::Error;
use std::f64::consts::TAU;

use slowcast::diagnostics::{diagnose, Thresholds};
use slowcast::experiment::{cmd_diagnose, cmd_forecast, RunConfig, RunOptions};
use slowcast::synth::{write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // Daily cycle on a slow upward drift, so copying the lookback is wrong.
    let wave = |t: usize| (TAU * t as f64 / 24.0).sin() * 5.0 + 20.0 + 0.05 * t as f64;
    let lookback: Vec<f64> = (0..96).map(wave).collect();
    let truth: Vec<f64> = (96..192).map(wave).collect();
    let cases: Vec<(&str, Vec<f64>)> = vec![
        ("healthy", truth.iter().map(|v| v + 0.1).collect()),
        (
            "compressed",
            (96..192)
                .map(|t| {
                    let level = 20.0 + 0.05 * t as f64;
                    level + (wave(t) - level) * 0.4
                })
                .collect(),
        ),
        ("lagged", (96..192).map(|t| wave(t - 5)).collect()),
        ("copied", lookback.clone()),
        ("constant", vec![20.0; 96]),
    ];
    let thresholds = Thresholds::default();
    for (name, pred) in &cases {
        let d = diagnose(pred, &lookback, &truth, &thresholds)?;
        println!(
            "{name:<10} flags={:?} lag={} copy_offset={} collapse_ratio={:.3} clip_severity={:.2}",
            d.flagged_modes(),
            d.phase_shift.lag,
            d.copy_paste.offset,
            d.constant_collapse.ratio,
            d.peak_clipping.severity
        );
    }

    let work = tempfile::tempdir()?;
    write_ett_csv(work.path().join("ETTh1.csv"), &SynthSpec::default())?;
    let values = vec!["20"; 96].join(", ");
    std::fs::write(
        work.path().join("constant.json"),
        serde_json::json!({ "*": format!("Flat it is.\n<FORECAST>{values}</FORECAST>") })
            .to_string(),
    )?;
    let config = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]
        [dataset]
        path = "ETTh1.csv"
        [window]
        stride = 8
        [strategy]
        generations = 1
        [provider]
        kind = "mock_scripted"
        fixture = "constant.json"
        [run]
        out = "runs"
        "#,
        work.path(),
    )?;
    let run = cmd_forecast(&config, &RunOptions::default())?;
    let report = cmd_diagnose(&run.run_dir, None)?;
    println!("diagnosed {} stored forecasts:", report.diagnosed);
    for (mode, count) in &report.counts {
        println!("  {mode:<18} {count}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
