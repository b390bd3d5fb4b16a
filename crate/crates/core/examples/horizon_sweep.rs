// Sweeping lookback, horizon and strategy; every grid point is its own run
// and all of them share one response cache.
//
// `cargo run --example horizon_sweep`

use std::error::Error;

use slowcast::experiment::{cmd_sweep, RunConfig, RunOptions};
use slowcast::synth::{write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let work = tempfile::tempdir()?;
    write_ett_csv(
        work.path().join("ETTh1.csv"),
        &SynthSpec {
            rows: 2000,
            noise: 0.3,
            trend: 0.002,
            seed: 4,
            ..SynthSpec::default()
        },
    )?;
    let config = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]
        [dataset]
        path = "ETTh1.csv"
        [strategy]
        generations = 1
        [provider]
        kind = "mock_seasonal_naive"
        period = 24
        [sweep]
        lookback = [48, 96]
        horizon = [48, 192]
        strategy = ["one_shot", "rollout"]
        [run]
        out = "runs"
        "#,
        work.path(),
    )?;
    let outcome = cmd_sweep(&config, &RunOptions::default())?;
    print!(
        "{}",
        std::fs::read_to_string(outcome.sweep_dir.join("sweep.csv"))?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
