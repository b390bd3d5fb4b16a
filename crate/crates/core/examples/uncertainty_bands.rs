// Fifty stochastic generations per window from the noisy mock, summarised
// as per-step spread and an 80% quantile band.
//
// `cargo run --example uncertainty_bands`

use std::error::Error;

use slowcast::experiment::{cmd_uncertainty, RunConfig, RunOptions};
use slowcast::synth::{write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let work = tempfile::tempdir()?;
    write_ett_csv(
        work.path().join("ETTh1.csv"),
        &SynthSpec {
            rows: 1000,
            noise: 0.5,
            seed: 1,
            ..SynthSpec::default()
        },
    )?;
    let config = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]
        [dataset]
        path = "ETTh1.csv"
        [provider]
        kind = "mock_noisy"
        base = { seasonal_naive = { period = 24 } }
        sigma = 1.0
        seed = 2024
        [run]
        out = "runs"
        "#,
        work.path(),
    )?;
    println!(
        "generations={} level={}",
        config.uncertainty.generations, config.uncertainty.level
    );
    let outcome = cmd_uncertainty(&config, &RunOptions::default())?;
    for (task, report) in &outcome.reports {
        let mean_std = report.per_step_std.iter().sum::<f64>() / report.per_step_std.len() as f64;
        let width = report
            .band_lower
            .iter()
            .zip(&report.band_upper)
            .map(|(lo, hi)| hi - lo)
            .sum::<f64>()
            / report.band_lower.len() as f64;
        println!(
            "{task}: mean per-step std {mean_std:.3}, mean band width {width:.3}, truth coverage {:.2}",
            report.coverage
        );
    }
    let csv = outcome.run.run_dir.join("uncertainty");
    println!("per-step CSVs in {}", csv.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
