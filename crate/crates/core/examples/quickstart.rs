// End-to-end forecast run on a synthetic ETTh1-shaped file with the
// seasonal-naive mock, then a second run that is served from the cache.
//
// `cargo run --example quickstart`

use std::error::Error;

use slowcast::experiment::{cmd_forecast, RunConfig, RunOptions};
use slowcast::synth::{write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let work = tempfile::tempdir()?;
    let data = work.path().join("ETTh1.csv");
    write_ett_csv(
        &data,
        &SynthSpec {
            rows: 1200,
            channels: 2,
            noise: 0.3,
            seed: 7,
            ..SynthSpec::default()
        },
    )?;

    let config = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]

        [dataset]
        path = "ETTh1.csv"

        [provider]
        kind = "mock_seasonal_naive"
        period = 24

        [run]
        out = "runs"
        max_parallel_requests = 4
        "#,
        work.path(),
    )?;

    let first = cmd_forecast(&config, &RunOptions::default())?;
    println!("run {} -> {}", first.run_id, first.run_dir.display());
    for row in &first.summary {
        println!(
            "  {:<22} {:<9} mse={:.4} mae={:.4} tasks={}",
            row.variant,
            row.strategy,
            row.mse.unwrap_or(f64::NAN),
            row.mae.unwrap_or(f64::NAN),
            row.count
        );
    }
    println!(
        "  provider calls: {}, cache hits: {}",
        first.stats.requests, first.stats.cache_hits
    );

    let again = cmd_forecast(&config, &RunOptions::default())?;
    println!(
        "second run: {} provider calls, {} cache hits",
        again.stats.requests, again.stats.cache_hits
    );
    assert_eq!(again.stats.requests, 0);
    assert_eq!(
        std::fs::read(first.run_dir.join("summary.csv"))?,
        std::fs::read(again.run_dir.join("summary.csv"))?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
