//! Experiment runner behaviour on mock providers.

mod common;

use std::fs;

use common::{config_in, prompt};
use slowcast::experiment::{
    cmd_ablate, cmd_diagnose, cmd_forecast, cmd_sweep, cmd_uncertainty, RunError, RunManifest,
    RunOptions, StrategyKind, TaskRecord, TaskStatus, VariantPreset,
};
use slowcast::provider::{cache_key, CompletionRequest, Gateway, ProviderSpec, SamplingParams};
use slowcast::synth::SynthSpec;

const NAIVE: &str = "[provider]\nkind = \"mock_seasonal_naive\"\nperiod = 24\n";

fn noisy_series() -> SynthSpec {
    SynthSpec {
        rows: 1000,
        noise: 0.3,
        seed: 21,
        ..SynthSpec::default()
    }
}

fn manifest(dir: &std::path::Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn cache_hit_miss_and_corrupt_entry() {
    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::with_cache(dir.path());
    let provider = ProviderSpec::seasonal_naive(24);
    let sampling = SamplingParams::default();
    let p = prompt(48, 24);
    let request = CompletionRequest::new(&p, 0);

    let first = gateway.dispatch(request, &sampling, &provider).unwrap();
    assert!(!first.cache_hit);
    let second = gateway.dispatch(request, &sampling, &provider).unwrap();
    assert!(second.cache_hit);
    assert_eq!(first.answer_text, second.answer_text);
    assert_eq!(gateway.stats().requests, 1);
    assert_eq!(gateway.stats().cache_hits, 1);

    // A different generation index is a different key.
    gateway
        .dispatch(CompletionRequest::new(&p, 1), &sampling, &provider)
        .unwrap();
    assert_eq!(gateway.stats().requests, 2);

    let entry = dir
        .path()
        .join(format!("{}.json", cache_key(request, &sampling, &provider)));
    fs::write(&entry, "{ torn").unwrap();
    let third = gateway.dispatch(request, &sampling, &provider).unwrap();
    assert!(!third.cache_hit);
    assert_eq!(third.answer_text, first.answer_text);
    assert_eq!(gateway.stats().requests, 3);
    assert!(serde_json::from_slice::<serde_json::Value>(&fs::read(&entry).unwrap()).is_ok());
}

#[test]
fn sampling_parameters_are_part_of_the_key() {
    let p = prompt(48, 24);
    let provider = ProviderSpec::seasonal_naive(24);
    let base = SamplingParams::default();
    let hotter = SamplingParams {
        temperature: 1.2,
        ..base
    };
    let req = CompletionRequest::new(&p, 0);
    assert_ne!(
        cache_key(req, &base, &provider),
        cache_key(req, &hotter, &provider)
    );
    assert_ne!(
        cache_key(req, &base, &provider),
        cache_key(req, &base, &ProviderSpec::seasonal_naive(12))
    );
    assert_eq!(
        cache_key(req, &base, &provider),
        cache_key(req, &base, &provider)
    );
}

#[test]
fn forecast_writes_one_record_per_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        &SynthSpec {
            channels: 3,
            ..noisy_series()
        },
        &format!("[window]\nstride = 24\n{NAIVE}"),
    );
    let outcome = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    // 200 test rows: (200 - 192) / 24 + 1 = 1 window per channel.
    assert_eq!(outcome.totals.tasks, 3);
    let lines = fs::read_to_string(outcome.run_dir.join("records.jsonl")).unwrap();
    let records: Vec<TaskRecord> = lines
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 3);
    for r in &records {
        let bundle = r.bundle.as_ref().unwrap();
        assert_eq!(bundle.generations(), 3);
        assert_eq!(bundle.mean_forecast.len(), 96);
        assert!(r.eval.diagnosis.is_some());
        assert_eq!(r.eval.dataset, "ETTh1");
        assert_eq!(r.eval.origin_index, 800 + 96);
    }
    let m = manifest(&outcome.run_dir);
    assert!(m.complete);
    assert_eq!(
        m.totals.done + m.totals.failed + m.totals.pending,
        m.tasks.len()
    );
    assert_eq!(m.totals.requests, 9);
    assert!(m.task_selection.contains("stride=24"));
    assert!(m.run_id.ends_with(&cfg.digest()));
    let summary = fs::read_to_string(outcome.run_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("variant,strategy,mse,mae,count,failure_rate\n"));
}

#[test]
fn invalid_config_is_rejected_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(dir.path(), &noisy_series(), NAIVE);
    cfg.window.horizon = 0;
    match cmd_forecast(&cfg, &RunOptions::default()) {
        Err(RunError::ConfigInvalid { field, .. }) => assert_eq!(field, "window.horizon"),
        other => panic!("{other:?}"),
    }
    cfg.window.horizon = 96;
    cfg.strategy.kind = StrategyKind::Rollout;
    cfg.strategy.rounds = 200;
    assert!(matches!(
        cmd_forecast(&cfg, &RunOptions::default()),
        Err(RunError::ConfigInvalid { .. })
    ));
}

#[test]
fn interrupted_run_resumes_to_identical_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(
        dir.path(),
        &SynthSpec {
            channels: 2,
            ..noisy_series()
        },
        "[window]\nlookback = 48\nhorizon = 24\nstride = 12\n\
         [provider]\nkind = \"mock_noisy\"\nbase = { seasonal_naive = { period = 24 } }\nsigma = 0.5\nseed = 3\n",
    );
    cfg.run.max_parallel_requests = 3;

    let reference = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    assert!(reference.complete);

    // Separate cache so the interrupted run really talks to the provider.
    cfg.run.cache_dir = Some(dir.path().join("other-cache"));
    let run_dir = dir.path().join("interrupted");
    let partial = cmd_forecast(
        &cfg,
        &RunOptions {
            run_dir: Some(run_dir.clone()),
            stop_after: Some(5),
        },
    )
    .unwrap();
    assert!(!partial.complete);
    assert!(!run_dir.join("summary.csv").exists());
    let m = manifest(&run_dir);
    assert_eq!(m.totals.done, 5);
    assert_eq!(
        m.totals.done + m.totals.pending + m.totals.failed,
        m.tasks.len()
    );

    // Simulate a crash mid-write.
    let mut log = fs::read_to_string(run_dir.join("records.jsonl")).unwrap();
    log.push_str("{\"task_index\": 7, \"task_");
    fs::write(run_dir.join("records.jsonl"), log).unwrap();

    let resumed = cmd_forecast(
        &cfg,
        &RunOptions {
            run_dir: Some(run_dir.clone()),
            stop_after: None,
        },
    )
    .unwrap();
    assert!(resumed.complete);
    assert_eq!(
        fs::read(reference.run_dir.join("summary.csv")).unwrap(),
        fs::read(run_dir.join("summary.csv")).unwrap()
    );
    let lines = fs::read_to_string(run_dir.join("records.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), reference.totals.tasks);
    assert!(manifest(&run_dir)
        .tasks
        .iter()
        .all(|t| t.status == TaskStatus::Done));
}

#[test]
fn rerun_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &noisy_series(), NAIVE);
    let a = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    let b = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    assert_ne!(a.run_dir, b.run_dir);
    assert_eq!(b.stats.requests, 0);
    assert_eq!(b.stats.cache_hits, a.stats.requests);
    assert_eq!(
        fs::read(a.run_dir.join("summary.csv")).unwrap(),
        fs::read(b.run_dir.join("summary.csv")).unwrap()
    );
}

#[test]
fn unparseable_answers_fail_tasks_and_trip_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"*": "I would rather not say."}"#,
    )
    .unwrap();
    let cfg = config_in(
        dir.path(),
        &noisy_series(),
        "[window]\nstride = 48\n[strategy]\ngenerations = 1\n\
         [provider]\nkind = \"mock_scripted\"\nfixture = \"bad.json\"\n",
    );
    let outcome = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(outcome.failure_rate, 1.0);
    assert!(!outcome.within_tolerance);
    let m = manifest(&outcome.run_dir);
    assert_eq!(m.totals.failed, m.tasks.len());
    assert_eq!(m.totals.parse_failures, m.tasks.len());
    let failures: Vec<_> = fs::read_dir(outcome.run_dir.join("failures"))
        .unwrap()
        .collect();
    assert_eq!(failures.len(), m.tasks.len());
    let text = fs::read_to_string(failures[0].as_ref().unwrap().path()).unwrap();
    assert!(text.contains("I would rather not say."));
    // Three attempts: the original answer plus two corrective re-prompts.
    assert_eq!(m.totals.requests, 3 * m.tasks.len() as u64);
    let summary = fs::read_to_string(outcome.run_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with(",,,0,1"));
}

#[test]
fn sweep_grids() {
    let dir = tempfile::tempdir().unwrap();
    let series = SynthSpec {
        rows: 2000,
        ..noisy_series()
    };
    let cfg = config_in(
        dir.path(),
        &series,
        &format!("[strategy]\ngenerations = 1\n[sweep]\nlookback = [48, 96]\n{NAIVE}"),
    );
    let outcome = cmd_sweep(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(outcome.rows.len(), 2);
    let csv = fs::read_to_string(outcome.sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("48,96,"));
    // Children write disjoint record files.
    assert_ne!(outcome.rows[0].run_dir, outcome.rows[1].run_dir);

    let mut temps = cfg.clone();
    temps.sweep = Default::default();
    temps.sweep.temperature = vec![0.0, 0.6, 1.2];
    let outcome = cmd_sweep(&temps, &RunOptions::default()).unwrap();
    assert_eq!(outcome.rows.len(), 3);
    assert!(outcome.rows.windows(2).all(|w| w[0].mse == w[1].mse));

    let mut product = cfg.clone();
    product.sweep = Default::default();
    product.sweep.strategy = vec![StrategyKind::OneShot, StrategyKind::Rollout];
    product.sweep.horizon = vec![48, 192];
    let outcome = cmd_sweep(&product, &RunOptions::default()).unwrap();
    assert_eq!(outcome.rows.len(), 4);

    let mut big = cfg.clone();
    big.sweep.lookback = slowcast::experiment::config::SWEEP_VALUES.to_vec();
    big.sweep.horizon = slowcast::experiment::config::SWEEP_VALUES.to_vec();
    big.sweep.temperature = vec![0.2, 0.6];
    assert!(matches!(
        cmd_sweep(&big, &RunOptions::default()),
        Err(RunError::GridTooLarge { size: 98, cap: 64 })
    ));

    let mut too_long = cfg.clone();
    too_long.sweep.lookback = vec![48, 1900];
    assert!(matches!(
        cmd_sweep(&too_long, &RunOptions::default()),
        Err(RunError::ConfigInvalid { .. })
    ));
}

#[test]
fn uncertainty_bands_on_deterministic_and_minimal_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(dir.path(), &noisy_series(), NAIVE);
    cfg.uncertainty.generations = 2;
    let outcome = cmd_uncertainty(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(outcome.reports.len(), 1);
    let (task, report) = &outcome.reports[0];
    assert!(report
        .band_lower
        .iter()
        .zip(&report.band_upper)
        .all(|(lo, hi)| lo == hi));
    let records = fs::read_to_string(outcome.run.run_dir.join("records.jsonl")).unwrap();
    let rec: TaskRecord = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    let exact_hits = rec
        .truth
        .iter()
        .zip(&report.band_lower)
        .filter(|(t, lo)| t == lo)
        .count() as f64
        / rec.truth.len() as f64;
    assert_eq!(report.coverage, exact_hits);
    let csv = fs::read_to_string(
        outcome
            .run
            .run_dir
            .join("uncertainty")
            .join(format!("{task}.csv")),
    )
    .unwrap();
    assert!(csv.starts_with("step,mean,lower,upper,std,truth\n"));
    assert_eq!(csv.lines().count(), 97);
}

#[test]
fn ablation_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        &noisy_series(),
        &format!("[strategy]\ngenerations = 1\n{NAIVE}"),
    );
    let (out, rows) = cmd_ablate(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows
        .iter()
        .all(|r| r.mse.unwrap().is_finite() && r.mae.unwrap().is_finite()));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let titles: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        titles,
        vec![
            "baseline",
            "w/o timestamps",
            "w/ forward shifting",
            "w/ backward shifting",
            "w/o context",
            "w/ Z-score",
            "w/ RevIN"
        ]
    );
    assert!(csv.starts_with("variant,ETTh1_mse,ETTh1_mae\n"));

    let plain = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rows[0].mse, plain.summary[0].mse);
    assert_eq!(rows[0].mae, plain.summary[0].mae);
    let revin = rows
        .iter()
        .find(|r| r.preset == VariantPreset::Revin)
        .unwrap();
    let rel = (revin.mse.unwrap() - rows[0].mse.unwrap()).abs() / rows[0].mse.unwrap();
    assert!(rel < 1e-9, "RevIN metrics not on the raw scale: {rel}");
}

#[test]
fn diagnose_counts_modes_offline() {
    let dir = tempfile::tempdir().unwrap();
    let flat = vec!["20"; 96].join(", ");
    fs::write(
        dir.path().join("flat.json"),
        serde_json::json!({ "*": format!("<FORECAST>{flat}</FORECAST>") }).to_string(),
    )
    .unwrap();
    let cfg = config_in(
        dir.path(),
        &noisy_series(),
        "[window]\nstride = 4\n[strategy]\ngenerations = 1\n\
         [provider]\nkind = \"mock_scripted\"\nfixture = \"flat.json\"\n",
    );
    let run = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    let requests_before = run.stats.requests;
    let report = cmd_diagnose(&run.run_dir, None).unwrap();
    assert_eq!(report.diagnosed, run.totals.tasks);
    assert_eq!(report.frequency("constant_collapse"), 1.0);
    assert_eq!(report.frequency("copy_paste"), 0.0);
    assert!(requests_before > 0);
    assert!(run.run_dir.join("diagnosis_summary.csv").exists());

    // Malformed lines are skipped and counted.
    let path = run.run_dir.join("records.jsonl");
    let mut log = fs::read_to_string(&path).unwrap();
    log.push_str("not json\n{}\n");
    fs::write(&path, log).unwrap();
    let report = cmd_diagnose(&run.run_dir, None).unwrap();
    assert_eq!(report.malformed, 2);
    assert_eq!(report.diagnosed, run.totals.tasks);

    assert!(matches!(
        cmd_diagnose(&dir.path().join("nope"), None),
        Err(RunError::RunDirMissing(_))
    ));
}

#[test]
fn healthy_seasonal_run_raises_few_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        &SynthSpec {
            rows: 2000,
            channels: 3,
            noise: 0.3,
            seed: 8,
            ..SynthSpec::default()
        },
        &format!("[window]\nstride = 4\n[strategy]\ngenerations = 1\n{NAIVE}"),
    );
    let run = cmd_forecast(&cfg, &RunOptions::default()).unwrap();
    let report = cmd_diagnose(&run.run_dir, None).unwrap();
    assert!(report.diagnosed >= 100, "{}", report.diagnosed);
    for (mode, count) in &report.counts {
        let rate = *count as f64 / report.diagnosed as f64;
        assert!(
            rate <= 0.05,
            "{mode} flagged on {rate:.2} of healthy forecasts"
        );
    }
    let grid = report.heatmap.expect("enough records for a heatmap");
    assert!(run.run_dir.join("heatmap.csv").exists());
    let total: usize = grid.iter().flatten().sum();
    assert_eq!(total, report.diagnosed);
}
