// The seven prompt variants (timestamps kept/removed/shifted, context on/off,
// raw/Z-score/RevIN) as rendered prompts and as a full ablation run.
//
// `cargo run --example prompt_ablation`

use std::error::Error;

use slowcast::dataset::{
    apply_missing, parse_csv, slide_windows, CsvSchema, MissingMask, MissingMode,
};
use slowcast::experiment::{
    builtin_context, cmd_ablate, RunConfig, RunOptions, VariantPreset, VariantSection,
};
use slowcast::prompt::{build_prompt, ContextDescriptor, FrameMeta};
use slowcast::synth::{ett_csv, write_ett_csv, SynthSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let spec = SynthSpec {
        rows: 1000,
        noise: 0.25,
        seed: 11,
        ..SynthSpec::default()
    };

    // How each variant changes the prompt, on a short window.
    let frame = parse_csv(&ett_csv(&spec), &CsvSchema::new("date"))?;
    let window = slide_windows(&frame, 6, 3, 3, 0)?.remove(0);
    let observed = apply_missing(&window, MissingMode::Full, &MissingMask::from_indices([]))?;
    let context = ContextDescriptor::parse(builtin_context("ett").ok_or("missing context")?)?;
    let meta = FrameMeta {
        dataset: "ETTh1".into(),
        channel: "OT".into(),
        frequency: frame.frequency,
        train_stats: Some(frame.channel_stats(0)?),
    };
    for preset in VariantPreset::ABLATION {
        let variant = preset
            .apply(&VariantSection::default())
            .prompt_variant(frame.frequency);
        let prompt = build_prompt(&observed, &context, &variant, &meta)?;
        println!("--- {} ---\n{}", preset.title(), prompt.series_block);
    }

    // The ablation table itself.
    let work = tempfile::tempdir()?;
    write_ett_csv(work.path().join("ETTh1.csv"), &spec)?;
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
        [run]
        out = "runs"
        "#,
        work.path(),
    )?;
    let (dir, _) = cmd_ablate(&config, &RunOptions::default())?;
    print!("{}", std::fs::read_to_string(dir.join("ablation.csv"))?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
