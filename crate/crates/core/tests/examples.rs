//! Every example under `examples/` runs to completion.

#[allow(dead_code)]
mod quickstart {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/quickstart.rs"
    ));
}

#[test]
fn quickstart_example_runs() {
    quickstart::run_example().expect("quickstart example should run");
}

#[allow(dead_code)]
mod reasoning_strategies {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/reasoning_strategies.rs"
    ));
}

#[test]
fn reasoning_strategies_example_runs() {
    reasoning_strategies::run_example().expect("reasoning_strategies example should run");
}

#[allow(dead_code)]
mod prompt_ablation {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/prompt_ablation.rs"
    ));
}

#[test]
fn prompt_ablation_example_runs() {
    prompt_ablation::run_example().expect("prompt_ablation example should run");
}

#[allow(dead_code)]
mod missing_data {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/missing_data.rs"
    ));
}

#[test]
fn missing_data_example_runs() {
    missing_data::run_example().expect("missing_data example should run");
}

#[allow(dead_code)]
mod uncertainty_bands {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/uncertainty_bands.rs"
    ));
}

#[test]
fn uncertainty_bands_example_runs() {
    uncertainty_bands::run_example().expect("uncertainty_bands example should run");
}

#[allow(dead_code)]
mod answer_parsing {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/answer_parsing.rs"
    ));
}

#[test]
fn answer_parsing_example_runs() {
    answer_parsing::run_example().expect("answer_parsing example should run");
}

#[allow(dead_code)]
mod failure_diagnostics {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/failure_diagnostics.rs"
    ));
}

#[test]
fn failure_diagnostics_example_runs() {
    failure_diagnostics::run_example().expect("failure_diagnostics example should run");
}

#[allow(dead_code)]
mod horizon_sweep {
    include!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/examples/horizon_sweep.rs"
    ));
}

#[test]
fn horizon_sweep_example_runs() {
    horizon_sweep::run_example().expect("horizon_sweep example should run");
}

#[allow(dead_code)]
mod live_api {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/live_api.rs"));
}

#[test]
fn live_api_example_runs() {
    live_api::run_example().expect("live_api example should run");
}
