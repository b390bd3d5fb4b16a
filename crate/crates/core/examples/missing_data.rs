// The three missing-data presentations: masked points dropped (No-Imp),
// replaced by a `None` token (None-Imp) or linearly interpolated (Lin-Imp),
// and their effect on forecast error.
//
// `cargo run --example missing_data`

use std::error::Error;

use slowcast::dataset::{
    apply_missing, parse_csv, slide_windows, CsvSchema, MissingMask, MissingMode,
};
use slowcast::experiment::{builtin_context, cmd_forecast, RunConfig, RunOptions, VariantPreset};
use slowcast::prompt::{build_prompt, ContextDescriptor, FrameMeta, PromptVariant};
use slowcast::synth::{ett_csv, write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let spec = SynthSpec {
        rows: 1000,
        noise: 0.25,
        seed: 5,
        ..SynthSpec::default()
    };
    let frame = parse_csv(&ett_csv(&spec), &CsvSchema::new("date"))?;
    let window = slide_windows(&frame, 8, 2, 2, 0)?.remove(0);
    let mask = MissingMask::generate(8, 0.25, 42)?;
    println!("masked lookback positions: {:?}", mask.indices);
    let context = ContextDescriptor::parse(builtin_context("ett").ok_or("missing context")?)?;
    let meta = FrameMeta {
        dataset: "ETTh1".into(),
        channel: "OT".into(),
        frequency: frame.frequency,
        train_stats: None,
    };
    for mode in [
        MissingMode::NoImp,
        MissingMode::NoneImp,
        MissingMode::LinImp,
    ] {
        let observed = apply_missing(&window, mode, &mask)?;
        let variant = PromptVariant {
            missing_mode: mode,
            ..PromptVariant::default()
        };
        let prompt = build_prompt(&observed, &context, &variant, &meta)?;
        println!(
            "--- {} ({} lines) ---\n{}",
            mode.label(),
            prompt.series_lines(),
            prompt.series_block
        );
    }

    let work = tempfile::tempdir()?;
    write_ett_csv(work.path().join("ETTh1.csv"), &spec)?;
    let base = RunConfig::from_toml_str(
        r#"
        include = ["preset:etth1"]
        [dataset]
        path = "ETTh1.csv"
        [window]
        stride = 24
        [strategy]
        generations = 1
        [variant]
        missing_rate = 0.2
        [provider]
        kind = "mock_seasonal_naive"
        period = 24
        [run]
        out = "runs"
        seed = 9
        "#,
        work.path(),
    )?;
    for preset in [
        VariantPreset::Baseline,
        VariantPreset::NoImp,
        VariantPreset::NoneImp,
        VariantPreset::LinImp,
    ] {
        let mut cfg = base.clone();
        cfg.variant = preset.apply(&base.variant);
        let outcome = cmd_forecast(&cfg, &RunOptions::default())?;
        let row = &outcome.summary[0];
        println!(
            "{:<9} mse={:.4} mae={:.4} windows={}",
            preset.title(),
            row.mse.unwrap_or(f64::NAN),
            row.mae.unwrap_or(f64::NAN),
            row.count
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
