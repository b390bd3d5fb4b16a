// A real reasoning model over an OpenAI-compatible endpoint.
//
// Needs `DEEPSEEK_API_KEY`; without it the example only prints what it would
// do. Point `SLOWCAST_ETTH1` at a real ETTh1.csv to use the benchmark file,
// otherwise a synthetic series is used. Five windows, one generation each.
//
// `DEEPSEEK_API_KEY=... cargo run --example live_api`

use std::error::Error;

use slowcast::experiment::{cmd_forecast, parse_provider_arg, RunConfig, RunOptions};
use slowcast::synth::{write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    if std::env::var("DEEPSEEK_API_KEY").map_or(true, |k| k.is_empty()) {
        println!("DEEPSEEK_API_KEY is not set; skipping the live call.");
        return Ok(());
    }
    let work = tempfile::tempdir()?;
    let data = match std::env::var("SLOWCAST_ETTH1") {
        Ok(path) => path.into(),
        Err(_) => {
            let path = work.path().join("ETTh1.csv");
            write_ett_csv(
                &path,
                &SynthSpec {
                    rows: 2000,
                    noise: 0.3,
                    ..SynthSpec::default()
                },
            )?;
            path
        }
    };
    let mut config = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]
        [dataset]
        path = "placeholder.csv"
        channels = ["OT"]
        [window]
        max_windows = 5
        [strategy]
        generations = 1
        [provider]
        kind = "mock_seasonal_naive"
        period = 24
        [run]
        out = "runs"
        max_parallel_requests = 2
        "#,
        work.path(),
    )?;
    config.dataset.path = data;
    config.provider = parse_provider_arg("deepseek")?;
    let outcome = cmd_forecast(&config, &RunOptions::default())?;
    for row in &outcome.summary {
        println!(
            "{} mse={:?} mae={:?} parsed={} failure_rate={:.2}",
            row.strategy, row.mse, row.mae, row.count, row.failure_rate
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
