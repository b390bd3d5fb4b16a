use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, StrategyKind, VariantPreset};
use super::RunError;
use crate::dataset::{
    apply_missing, chronological_split, load_csv, slide_windows, MissingMask, MissingMode,
    SeriesFrame, WindowInstance,
};
use crate::diagnostics::{diagnose, Diagnosis, Thresholds};
use crate::engine::{Engine, ForecastBundle, TaskInput};
use crate::eval::{
    aggregate_dataset, cot_decile_heatmap, fmt_opt, heatmap_csv, summary_csv, EvalRecord,
    SummaryRow, TaskLabel, UncertaintyReport,
};
use crate::parser::trace_token_count;
use crate::prompt::{ContextDescriptor, FrameMeta, PromptVariant};
use crate::provider::{Gateway, GatewayStats};

/// Where a command writes and whether to stop early.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Explicit run directory. Reusing an existing one resumes it.
    pub run_dir: Option<PathBuf>,
    /// Stop after this many newly completed tasks, leaving the rest pending
    /// as an interrupted run would.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: String,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub tasks: usize,
    pub pending: usize,
    pub done: usize,
    pub failed: usize,
    pub requests: u64,
    pub cache_hits: u64,
    pub parse_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    /// How tasks were enumerated (split part, stride, channels).
    pub task_selection: String,
    pub tasks: Vec<TaskEntry>,
    pub totals: Totals,
    pub wall_clock_secs: f64,
    pub complete: bool,
}

impl RunManifest {
    fn recount(&mut self) {
        let count = |s: TaskStatus| self.tasks.iter().filter(|t| t.status == s).count();
        self.totals.tasks = self.tasks.len();
        self.totals.pending = count(TaskStatus::Pending);
        self.totals.done = count(TaskStatus::Done);
        self.totals.failed = count(TaskStatus::Failed);
    }
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_index: usize,
    pub task_id: String,
    pub channel: String,
    /// Complete raw lookback, before any missing-data corruption.
    pub lookback: Vec<f64>,
    pub truth: Vec<f64>,
    /// Masked lookback positions (empty under full data).
    pub mask: Vec<usize>,
    pub bundle: Option<ForecastBundle>,
    pub eval: EvalRecord,
    pub parse_failure: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub run_id: String,
    pub summary: Vec<SummaryRow>,
    pub totals: Totals,
    pub failure_rate: f64,
    /// False when the failure rate exceeds `run.failure_tolerance`.
    pub within_tolerance: bool,
    /// False when the run stopped early and tasks remain pending.
    pub complete: bool,
    pub stats: GatewayStats,
}

struct TaskSpec {
    index: usize,
    id: String,
    channel_name: String,
    window: WindowInstance,
    /// Row offset of the test part within the full frame.
    offset: usize,
}

struct Prepared {
    frame_name: String,
    test: SeriesFrame,
    train: SeriesFrame,
    context: ContextDescriptor,
    variant: PromptVariant,
    tasks: Vec<TaskSpec>,
    selection: String,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    cfg.validate()?;
    let schema = cfg.dataset.schema();
    let frame = load_csv(&cfg.dataset.path, &schema)?;
    let [a, b, c] = cfg.dataset.split;
    let (train, _validation, test) = chronological_split(&frame, (a, b, c), 0)?;
    let offset = frame.len() - test.len();
    let w = &cfg.window;
    let mut tasks = Vec::new();
    for ch in 0..test.width() {
        let windows = slide_windows(&test, w.lookback, w.horizon, w.stride(), ch)?;
        let take = w.max_windows.unwrap_or(usize::MAX);
        for window in windows.into_iter().take(take) {
            let origin = window.origin_index + offset;
            tasks.push(TaskSpec {
                index: 0,
                id: format!("o{origin:06}_c{ch:02}"),
                channel_name: test.channels[ch].clone(),
                window,
                offset,
            });
        }
    }
    // Window-major order so an early stop covers all channels evenly.
    tasks.sort_by_key(|t| (t.window.origin_index, t.window.channel_id));
    for (i, t) in tasks.iter_mut().enumerate() {
        t.index = i;
    }
    let selection = format!(
        "test part rows {}..{} of {}; L={} H={} stride={}{}; channels [{}]",
        offset,
        frame.len(),
        frame.len(),
        w.lookback,
        w.horizon,
        w.stride(),
        w.max_windows
            .map(|m| format!(" max_windows={m}"))
            .unwrap_or_default(),
        test.channels.join(", ")
    );
    Ok(Prepared {
        frame_name: cfg.dataset.name.clone(),
        variant: cfg.variant.prompt_variant(test.frequency),
        context: cfg.dataset.context()?,
        test,
        train,
        tasks,
        selection,
    })
}

/// Seed of a task's missing-data mask, independent of scheduling order.
fn mask_seed(global: u64, origin: usize, channel: usize) -> u64 {
    global
        ^ (origin as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (channel as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn run_task(
    cfg: &RunConfig,
    prep: &Prepared,
    engine: &Engine<'_>,
    spec: &TaskSpec,
) -> (TaskRecord, Option<String>) {
    let window = &spec.window;
    let origin = window.origin_index + spec.offset;
    let label = TaskLabel {
        dataset: prep.frame_name.clone(),
        origin_index: origin,
        channel_id: window.channel_id,
        strategy: cfg.strategy.strategy().label(),
        variant: cfg.variant.label(),
    };
    let mut record = TaskRecord {
        task_index: spec.index,
        task_id: spec.id.clone(),
        channel: spec.channel_name.clone(),
        lookback: window.lookback_values.clone(),
        truth: window.truth.clone(),
        mask: Vec::new(),
        bundle: None,
        eval: EvalRecord::failed(label.clone(), "not run"),
        parse_failure: false,
    };
    let mask = if cfg.variant.missing == MissingMode::Full {
        MissingMask::from_indices([])
    } else {
        match MissingMask::generate(
            window.lookback(),
            cfg.variant.missing_rate,
            mask_seed(cfg.run.seed, origin, window.channel_id),
        ) {
            Ok(m) => m,
            Err(e) => {
                record.eval = EvalRecord::failed(label, e.to_string());
                return (record, None);
            }
        }
    };
    record.mask = mask.indices.iter().copied().collect();
    let observed = match apply_missing(window, cfg.variant.missing, &mask) {
        Ok(o) => o,
        Err(e) => {
            record.eval = EvalRecord::failed(label, e.to_string());
            return (record, None);
        }
    };
    let meta = FrameMeta {
        dataset: prep.frame_name.clone(),
        channel: spec.channel_name.clone(),
        frequency: prep.test.frequency,
        train_stats: prep.train.channel_stats(window.channel_id).ok(),
    };
    let task = TaskInput {
        window: &observed,
        context: &prep.context,
        variant: &prep.variant,
        meta: &meta,
    };
    let bundle = match engine.forecast_window(task, &cfg.strategy_config()) {
        Ok(b) => b,
        Err(e) => {
            record.parse_failure = e.is_parse_failure();
            let raw = e.raw_response().map(str::to_owned);
            record.eval = EvalRecord::failed(label, e.to_string());
            return (record, raw.or_else(|| Some(e.to_string())));
        }
    };
    let cot_tokens = {
        let per_gen: Vec<u64> = bundle
            .records
            .iter()
            .map(|recs| recs.iter().map(trace_token_count).sum())
            .collect();
        per_gen.iter().sum::<u64>() / per_gen.len().max(1) as u64
    };
    let diagnosis: Option<Diagnosis> = diagnose(
        &bundle.mean_forecast,
        &window.lookback_values,
        &window.truth,
        &cfg.diagnostics,
    )
    .ok();
    let repairs = bundle.repairs.iter().flatten().cloned().collect();
    record.eval = match EvalRecord::scored(
        label.clone(),
        &bundle.mean_forecast,
        &window.truth,
        cot_tokens,
        repairs,
        diagnosis,
    ) {
        Ok(r) => r,
        Err(e) => EvalRecord::failed(label, format!("scoring failed: {e}")),
    };
    let failed = record.eval.is_failure();
    record.bundle = Some(bundle);
    let note = failed.then(|| record.eval.failure.clone().unwrap_or_default());
    (record, note)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| RunError::io(path, e))?;
    tmp.persist(path).map_err(|e| RunError::io(path, e.error))?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    let json = serde_json::to_vec_pretty(manifest)?;
    write_atomic(&dir.join("manifest.json"), &json)
}

fn fresh_run_id(cfg: &RunConfig) -> String {
    format!(
        "{}-{}",
        chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
        cfg.digest()
    )
}

/// Picks an unused directory for a new run under `out`.
fn new_run_dir(out: &Path, run_id: &str) -> PathBuf {
    let mut dir = out.join(run_id);
    let mut n = 2;
    while dir.exists() {
        dir = out.join(format!("{run_id}-{n}"));
        n += 1;
    }
    dir
}

/// Valid records from an earlier attempt, keyed by task index.
fn load_previous(path: &Path, tasks: &[TaskSpec]) -> BTreeMap<usize, TaskRecord> {
    let Ok(text) = fs::read_to_string(path) else {
        return BTreeMap::new();
    };
    let mut kept = BTreeMap::new();
    for line in text.lines() {
        let Ok(rec) = serde_json::from_str::<TaskRecord>(line) else {
            continue;
        };
        let matches = tasks
            .get(rec.task_index)
            .is_some_and(|t| t.id == rec.task_id);
        // Failed tasks are retried on resume.
        if matches && !rec.eval.is_failure() {
            kept.insert(rec.task_index, rec);
        }
    }
    kept
}

/// Runs every (window, channel) task of the config's test split.
///
/// Re-using `opts.run_dir` of an interrupted run resumes it: completed
/// records are kept and only pending or failed tasks are dispatched again.
pub fn cmd_forecast(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let prep = prepare(cfg)?;
    let (run_dir, run_id) = match &opts.run_dir {
        Some(dir) => {
            let id = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| fresh_run_id(cfg));
            (dir.clone(), id)
        }
        None => {
            let id = fresh_run_id(cfg);
            (new_run_dir(&cfg.run.out, &id), id)
        }
    };
    fs::create_dir_all(&run_dir).map_err(|e| RunError::io(&run_dir, e))?;
    let records_path = run_dir.join("records.jsonl");
    let manifest_path = run_dir.join("manifest.json");

    let previous_totals = fs::read(&manifest_path)
        .ok()
        .and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok())
        .map(|m| m.totals)
        .unwrap_or_default();
    let mut done = load_previous(&records_path, &prep.tasks);
    {
        // Rewrite the log with only the records being kept, dropping torn lines.
        let mut text = String::new();
        for rec in done.values() {
            text.push_str(&serde_json::to_string(rec)?);
            text.push('\n');
        }
        write_atomic(&records_path, text.as_bytes())?;
    }
    if !done.is_empty() {
        tracing::info!(kept = done.len(), "resuming run {}", run_dir.display());
    }

    let mut manifest = RunManifest {
        run_id: run_id.clone(),
        config: cfg.clone(),
        task_selection: prep.selection.clone(),
        tasks: prep
            .tasks
            .iter()
            .map(|t| TaskEntry {
                id: t.id.clone(),
                status: if done.contains_key(&t.index) {
                    TaskStatus::Done
                } else {
                    TaskStatus::Pending
                },
            })
            .collect(),
        totals: Totals {
            requests: previous_totals.requests,
            cache_hits: previous_totals.cache_hits,
            ..Totals::default()
        },
        wall_clock_secs: 0.0,
        complete: false,
    };
    manifest.recount();
    write_manifest(&run_dir, &manifest)?;

    let pending: Vec<&TaskSpec> = prep
        .tasks
        .iter()
        .filter(|t| !done.contains_key(&t.index))
        .collect();
    let gateway = Gateway::with_cache(cfg.run.cache_dir());
    let engine = Engine::new(&gateway, &cfg.provider);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = cfg.run.max_parallel_requests.min(pending.len()).max(1);
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&records_path)
        .map_err(|e| RunError::io(&records_path, e))?;
    let mut parse_failures = 0;
    let mut written = 0;

    std::thread::scope(|scope| -> Result<(), RunError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, pending, engine, prep) = (&next, &stop, &pending, &engine, &prep);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = pending.get(i) else { break };
                let result = run_task(cfg, prep, engine, spec);
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (record, failure_note) in rx {
            if opts.stop_after.is_some_and(|n| written >= n) {
                stop.store(true, Ordering::SeqCst);
                continue;
            }
            let line = serde_json::to_string(&record)?;
            writeln!(log, "{line}").map_err(|e| RunError::io(&records_path, e))?;
            log.flush().map_err(|e| RunError::io(&records_path, e))?;
            let failed = record.eval.is_failure();
            if let Some(note) = failure_note {
                let dir = run_dir.join("failures");
                fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
                let path = dir.join(format!("{}.txt", record.task_id));
                let body = format!(
                    "task {}\nerror: {}\n\n{}\n",
                    record.task_id,
                    record.eval.failure.as_deref().unwrap_or(""),
                    note
                );
                fs::write(&path, body).map_err(|e| RunError::io(&path, e))?;
                tracing::warn!(task = %record.task_id, "task failed");
            }
            parse_failures += usize::from(record.parse_failure);
            manifest.tasks[record.task_index].status = if failed {
                TaskStatus::Failed
            } else {
                TaskStatus::Done
            };
            let stats = gateway.stats();
            manifest.totals.requests = previous_totals.requests + stats.requests;
            manifest.totals.cache_hits = previous_totals.cache_hits + stats.cache_hits;
            manifest.totals.parse_failures = parse_failures;
            manifest.recount();
            manifest.wall_clock_secs = started.elapsed().as_secs_f64();
            write_manifest(&run_dir, &manifest)?;
            done.insert(record.task_index, record);
            written += 1;
            if opts.stop_after.is_some_and(|n| written >= n) {
                stop.store(true, Ordering::SeqCst);
            }
        }
        Ok(())
    })?;

    // Drop records that were computed but never written (early stop).
    let evals: Vec<EvalRecord> = done.values().map(|r| r.eval.clone()).collect();
    let complete = manifest.totals.pending == 0;
    let summary = if evals.is_empty() {
        Vec::new()
    } else {
        aggregate_dataset(&evals)?
    };
    if complete {
        let path = run_dir.join("summary.csv");
        write_atomic(&path, summary_csv(&summary).as_bytes())?;
    }
    let stats = gateway.stats();
    manifest.totals.requests = previous_totals.requests + stats.requests;
    manifest.totals.cache_hits = previous_totals.cache_hits + stats.cache_hits;
    manifest.totals.parse_failures = parse_failures;
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest.complete = complete;
    manifest.recount();
    write_manifest(&run_dir, &manifest)?;

    let failure_rate = if evals.is_empty() {
        0.0
    } else {
        evals.iter().filter(|e| e.is_failure()).count() as f64 / evals.len() as f64
    };
    tracing::info!(
        run = %run_id,
        tasks = manifest.totals.tasks,
        failed = manifest.totals.failed,
        requests = stats.requests,
        cache_hits = stats.cache_hits,
        "run finished"
    );
    Ok(RunOutcome {
        run_dir,
        run_id,
        summary,
        totals: manifest.totals,
        failure_rate,
        within_tolerance: failure_rate <= cfg.run.failure_tolerance,
        complete,
        stats,
    })
}

/// Reads every well-formed record of a run; returns them with the number of
/// malformed lines skipped.
pub(crate) fn read_records(run_dir: &Path) -> Result<(Vec<TaskRecord>, usize), RunError> {
    let path = run_dir.join("records.jsonl");
    let text = fs::read_to_string(&path)
        .map_err(|_| RunError::RunDirMissing(run_dir.display().to_string()))?;
    let mut records = Vec::new();
    let mut malformed = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<TaskRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                tracing::warn!(error = %e, "skipping malformed record");
                malformed += 1;
            }
        }
    }
    records.sort_by_key(|r| r.task_index);
    Ok((records, malformed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lookback: usize,
    pub horizon: usize,
    pub temperature: f64,
    pub strategy: String,
    pub variant: String,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub count: usize,
    pub failure_rate: f64,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub sweep_dir: PathBuf,
    pub rows: Vec<SweepRow>,
    pub within_tolerance: bool,
}

fn child_configs(cfg: &RunConfig) -> Result<Vec<(String, RunConfig)>, RunError> {
    let axes = &cfg.sweep;
    let cap = axes
        .max_grid
        .unwrap_or(super::config::SweepAxes::DEFAULT_MAX_GRID);
    let size = axes.grid_size();
    if size > cap {
        return Err(RunError::GridTooLarge { size, cap });
    }
    let or_base = |v: &[usize], base: usize| if v.is_empty() { vec![base] } else { v.to_vec() };
    let lookbacks = or_base(&axes.lookback, cfg.window.lookback);
    let horizons = or_base(&axes.horizon, cfg.window.horizon);
    let temps = if axes.temperature.is_empty() {
        vec![cfg.sampling.temperature]
    } else {
        axes.temperature.clone()
    };
    let strategies: Vec<StrategyKind> = if axes.strategy.is_empty() {
        vec![cfg.strategy.kind]
    } else {
        axes.strategy.clone()
    };
    let variants: Vec<Option<VariantPreset>> = if axes.variant.is_empty() {
        vec![None]
    } else {
        axes.variant.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &l in &lookbacks {
        for &h in &horizons {
            for &t in &temps {
                for &s in &strategies {
                    for &v in &variants {
                        let mut child = cfg.clone();
                        child.window.lookback = l;
                        child.window.horizon = h;
                        if cfg.window.stride.is_none() {
                            child.window.stride = None;
                        }
                        child.sampling.temperature = t;
                        child.strategy.kind = s;
                        if let Some(v) = v {
                            child.variant = v.apply(&cfg.variant);
                        }
                        child.sweep = Default::default();
                        child.run.cache_dir = Some(cfg.run.cache_dir());
                        child.validate()?;
                        let name = format!(
                            "{:03}_L{l}_H{h}_T{t}_{}_{}",
                            out.len(),
                            child.strategy.strategy().label(),
                            v.map(VariantPreset::slug).unwrap_or("base")
                        );
                        out.push((name, child));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Runs one child forecast per grid point; children share the response cache.
pub fn cmd_sweep(cfg: &RunConfig, opts: &RunOptions) -> Result<SweepOutcome, RunError> {
    let children = child_configs(cfg)?;
    // Fail before any provider call if a grid point does not fit the data.
    for (name, child) in &children {
        prepare(child).map_err(|e| RunError::ConfigInvalid {
            field: format!("sweep[{name}]"),
            reason: e.to_string(),
        })?;
    }
    let sweep_dir = match &opts.run_dir {
        Some(d) => d.clone(),
        None => new_run_dir(&cfg.run.out, &format!("sweep-{}", fresh_run_id(cfg))),
    };
    fs::create_dir_all(&sweep_dir).map_err(|e| RunError::io(&sweep_dir, e))?;
    let mut rows = Vec::new();
    let mut within = true;
    for (name, child) in &children {
        let outcome = cmd_forecast(
            child,
            &RunOptions {
                run_dir: Some(sweep_dir.join(name)),
                stop_after: None,
            },
        )?;
        within &= outcome.within_tolerance;
        let summary = outcome.summary.first();
        rows.push(SweepRow {
            lookback: child.window.lookback,
            horizon: child.window.horizon,
            temperature: child.sampling.temperature,
            strategy: child.strategy.strategy().label(),
            variant: child.variant.label(),
            mse: summary.and_then(|s| s.mse),
            mae: summary.and_then(|s| s.mae),
            count: summary.map_or(0, |s| s.count),
            failure_rate: outcome.failure_rate,
            run_dir: outcome.run_dir,
        });
    }
    let mut csv = String::from(
        "lookback,horizon,temperature,strategy,variant,mse,mae,count,failure_rate,run\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.lookback,
            r.horizon,
            r.temperature,
            r.strategy,
            r.variant,
            fmt_opt(r.mse),
            fmt_opt(r.mae),
            r.count,
            r.failure_rate,
            r.run_dir.file_name().unwrap_or_default().to_string_lossy()
        ));
    }
    write_atomic(&sweep_dir.join("sweep.csv"), csv.as_bytes())?;
    Ok(SweepOutcome {
        sweep_dir,
        rows,
        within_tolerance: within,
    })
}

#[derive(Debug, Clone)]
pub struct UncertaintyOutcome {
    pub run: RunOutcome,
    /// Per successful task, in task order.
    pub reports: Vec<(String, UncertaintyReport)>,
}

/// Forecasts with `uncertainty.generations` samples per task and writes
/// per-step band CSVs under `uncertainty/`.
pub fn cmd_uncertainty(cfg: &RunConfig, opts: &RunOptions) -> Result<UncertaintyOutcome, RunError> {
    let mut cfg = cfg.clone();
    cfg.strategy.generations = cfg.uncertainty.generations;
    let run = cmd_forecast(&cfg, opts)?;
    let (records, _) = read_records(&run.run_dir)?;
    let dir = run.run_dir.join("uncertainty");
    fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    let mut reports = Vec::new();
    let mut summary = String::from("task,level,mean_std,coverage\n");
    for rec in records {
        let Some(bundle) = &rec.bundle else { continue };
        let report =
            UncertaintyReport::new(&bundle.per_generation, cfg.uncertainty.level, &rec.truth)?;
        let path = dir.join(format!("{}.csv", rec.task_id));
        write_atomic(&path, report.to_csv(&rec.truth).as_bytes())?;
        let mean_std = crate::stats::mean(&report.per_step_std);
        summary.push_str(&format!(
            "{},{},{},{}\n",
            rec.task_id, report.level, mean_std, report.coverage
        ));
        reports.push((rec.task_id, report));
    }
    write_atomic(&dir.join("summary.csv"), summary.as_bytes())?;
    Ok(UncertaintyOutcome { run, reports })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub preset: VariantPreset,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub run_dir: PathBuf,
}

/// Runs the prompt-ablation variants and writes `ablation.csv` with one row
/// per variant and MSE/MAE columns for the dataset.
pub fn cmd_ablate(
    cfg: &RunConfig,
    opts: &RunOptions,
) -> Result<(PathBuf, Vec<AblationRow>), RunError> {
    let presets: Vec<VariantPreset> = if cfg.sweep.variant.is_empty() {
        VariantPreset::ABLATION.to_vec()
    } else {
        cfg.sweep.variant.clone()
    };
    let dir = match &opts.run_dir {
        Some(d) => d.clone(),
        None => new_run_dir(&cfg.run.out, &format!("ablate-{}", fresh_run_id(cfg))),
    };
    fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    let mut rows = Vec::new();
    for preset in presets {
        let mut child = cfg.clone();
        child.variant = preset.apply(&cfg.variant);
        child.sweep = Default::default();
        child.run.cache_dir = Some(cfg.run.cache_dir());
        let outcome = cmd_forecast(
            &child,
            &RunOptions {
                run_dir: Some(dir.join(preset.slug())),
                stop_after: None,
            },
        )?;
        let s = outcome.summary.first();
        rows.push(AblationRow {
            preset,
            mse: s.and_then(|s| s.mse),
            mae: s.and_then(|s| s.mae),
            run_dir: outcome.run_dir,
        });
    }
    let ds = &cfg.dataset.name;
    let mut csv = format!("variant,{ds}_mse,{ds}_mae\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.preset.title(),
            fmt_opt(r.mse),
            fmt_opt(r.mae)
        ));
    }
    write_atomic(&dir.join("ablation.csv"), csv.as_bytes())?;
    Ok((dir, rows))
}

/// Offline failure-mode analysis of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseReport {
    /// Records with a forecast that were re-diagnosed.
    pub diagnosed: usize,
    pub malformed: usize,
    /// Flag count per failure mode.
    pub counts: BTreeMap<&'static str, usize>,
    pub heatmap: Option<[[usize; 10]; 10]>,
}

impl DiagnoseReport {
    pub fn frequency(&self, mode: &str) -> f64 {
        if self.diagnosed == 0 {
            return 0.0;
        }
        self.counts.get(mode).copied().unwrap_or(0) as f64 / self.diagnosed as f64
    }
}

const MODES: [&str; 4] = [
    "constant_collapse",
    "copy_paste",
    "phase_shift",
    "peak_clipping",
];

/// Re-runs the detectors over stored forecasts (no provider calls) and
/// writes `diagnosis.csv`, `diagnosis_summary.csv` and `heatmap.csv`.
pub fn cmd_diagnose(
    run_dir: &Path,
    thresholds: Option<&Thresholds>,
) -> Result<DiagnoseReport, RunError> {
    if !run_dir.is_dir() {
        return Err(RunError::RunDirMissing(run_dir.display().to_string()));
    }
    let (records, malformed) = read_records(run_dir)?;
    let thresholds = match thresholds {
        Some(t) => *t,
        None => fs::read(run_dir.join("manifest.json"))
            .ok()
            .and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok())
            .map(|m| m.config.diagnostics)
            .unwrap_or_default(),
    };
    let mut counts: BTreeMap<&'static str, usize> = MODES.iter().map(|m| (*m, 0)).collect();
    let mut csv = String::from(
        "task,constant_collapse,copy_paste,phase_shift,peak_clipping,collapse_ratio,copy_offset,copy_similarity,lag,clip_severity\n",
    );
    let mut heat_input = Vec::new();
    let mut diagnosed = 0;
    let mut seen = HashSet::new();
    for rec in &records {
        let Some(bundle) = &rec.bundle else { continue };
        if !seen.insert(rec.task_id.as_str()) {
            continue;
        }
        let Ok(d) = diagnose(
            &bundle.mean_forecast,
            &rec.lookback,
            &rec.truth,
            &thresholds,
        ) else {
            continue;
        };
        diagnosed += 1;
        for mode in d.flagged_modes() {
            if let Some(c) = counts.get_mut(mode) {
                *c += 1;
            }
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rec.task_id,
            d.constant_collapse.flagged,
            d.copy_paste.flagged,
            d.phase_shift.flagged,
            d.peak_clipping.flagged,
            d.constant_collapse.ratio,
            d.copy_paste.offset,
            d.copy_paste.similarity,
            d.phase_shift.lag,
            d.peak_clipping.severity
        ));
        if let Some(mse) = rec.eval.mse {
            heat_input.push((rec.eval.cot_tokens, mse));
        }
    }
    write_atomic(&run_dir.join("diagnosis.csv"), csv.as_bytes())?;
    let mut summary = String::from("mode,count,frequency\n");
    for mode in MODES {
        let c = counts[mode];
        let f = if diagnosed == 0 {
            0.0
        } else {
            c as f64 / diagnosed as f64
        };
        summary.push_str(&format!("{mode},{c},{f}\n"));
    }
    summary.push_str(&format!("malformed_records,{malformed},\n"));
    write_atomic(&run_dir.join("diagnosis_summary.csv"), summary.as_bytes())?;
    let heatmap = cot_decile_heatmap(&heat_input).ok();
    if let Some(grid) = &heatmap {
        write_atomic(&run_dir.join("heatmap.csv"), heatmap_csv(grid).as_bytes())?;
    }
    Ok(DiagnoseReport {
        diagnosed,
        malformed,
        counts,
        heatmap,
    })
}
