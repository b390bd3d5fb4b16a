// One-shot, decoupled (draft → critique → final) and rollout reasoning on
// the same window, driven directly through the engine.
//
// With the seasonal-naive mock all three must agree: tiling the last period
// commutes with feeding predicted chunks back as context.
//
// `cargo run --example reasoning_strategies`

use std::error::Error;

use slowcast::dataset::{
    apply_missing, parse_csv, slide_windows, CsvSchema, MissingMask, MissingMode,
};
use slowcast::engine::{Engine, Strategy, StrategyConfig, TaskInput};
use slowcast::eval::{mae, mse};
use slowcast::prompt::{ContextDescriptor, FrameMeta, PromptVariant};
use slowcast::provider::{Gateway, ProviderSpec};
use slowcast::synth::{ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let frame = parse_csv(
        &ett_csv(&SynthSpec {
            rows: 400,
            noise: 0.2,
            seed: 3,
            ..SynthSpec::default()
        }),
        &CsvSchema::new("date"),
    )?;
    let window = slide_windows(&frame, 96, 96, 96, 0)?.remove(0);
    let observed = apply_missing(&window, MissingMode::Full, &MissingMask::from_indices([]))?;
    let context = ContextDescriptor::parse(
        "[domain]\nTransformer oil temperature.\n[channels]\nOT: oil temperature\n",
    )?;
    let meta = FrameMeta {
        dataset: "ETTh1".into(),
        channel: "OT".into(),
        frequency: frame.frequency,
        train_stats: None,
    };
    let variant = PromptVariant::default();
    let task = TaskInput {
        window: &observed,
        context: &context,
        variant: &variant,
        meta: &meta,
    };

    let gateway = Gateway::new();
    let provider = ProviderSpec::seasonal_naive(24);
    let engine = Engine::new(&gateway, &provider);
    let mut forecasts = Vec::new();
    for strategy in [
        Strategy::OneShot,
        Strategy::Decoupled,
        Strategy::Rollout { rounds: 4 },
    ] {
        let cfg = StrategyConfig {
            strategy,
            generations: 1,
            ..StrategyConfig::default()
        };
        let bundle = engine.forecast_window(task, &cfg)?;
        let calls: usize = bundle.records.iter().map(Vec::len).sum();
        println!(
            "{:<10} calls={} mse={:.5} mae={:.5}",
            strategy.label(),
            calls,
            mse(&bundle.mean_forecast, &window.truth)?,
            mae(&bundle.mean_forecast, &window.truth)?
        );
        forecasts.push(bundle.mean_forecast);
    }
    assert!(forecasts.windows(2).all(|w| w[0] == w[1]));
    println!("all strategies produced the same forecast");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
