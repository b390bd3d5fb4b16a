//! Command-line front end over `slowcast::experiment`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowcast::experiment::{
    cmd_ablate, cmd_diagnose, cmd_forecast, cmd_sweep, cmd_uncertainty, parse_provider_arg,
    RunConfig, RunError, RunOptions, StrategyKind,
};

#[derive(Parser)]
#[command(
    name = "slowcast",
    version,
    about = "Zero-shot forecasting with reasoning LLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forecast every test window and write records, manifest and summary.
    Forecast(Overrides),
    /// Run the cartesian grid of the config's [sweep] axes.
    Sweep(Overrides),
    /// Sample many generations per window and emit quantile bands.
    Uncertainty(Overrides),
    /// Run the prompt-ablation variants and write ablation.csv.
    Ablate(Overrides),
    /// Re-run failure-mode detectors over a finished run directory.
    Diagnose {
        /// Run directory holding records.jsonl.
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    /// mock_seasonal_naive:<period> | mock_noisy:<sigma>:<seed>[:<period>] |
    /// mock_scripted:<fixture.json> | deepseek | <provider.toml>
    #[arg(long)]
    provider: Option<String>,
    /// one_shot | decoupled | rollout[:<rounds>]
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Lookback length.
    #[arg(long = "l")]
    lookback: Option<usize>,
    /// Horizon length.
    #[arg(long = "h")]
    horizon: Option<usize>,
    /// Generations per window.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Existing run directory to resume, or an explicit new one.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

fn invalid(field: &str, reason: String) -> RunError {
    RunError::ConfigInvalid {
        field: field.into(),
        reason,
    }
}

impl Overrides {
    fn resolve(&self, uncertainty: bool) -> Result<(RunConfig, RunOptions), RunError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(p) = &self.provider {
            cfg.provider = parse_provider_arg(p)?;
        }
        if let Some(s) = &self.strategy {
            let (kind, rounds) = s.split_once(':').unwrap_or((s, ""));
            cfg.strategy.kind = kind
                .parse::<StrategyKind>()
                .map_err(|e| invalid("--strategy", e))?;
            if !rounds.is_empty() {
                cfg.strategy.rounds = rounds
                    .parse()
                    .map_err(|_| invalid("--strategy", format!("bad round count `{rounds}`")))?;
            }
        }
        if let Some(t) = self.temperature {
            cfg.sampling.temperature = t;
        }
        if let Some(l) = self.lookback {
            cfg.window.lookback = l;
        }
        if let Some(h) = self.horizon {
            cfg.window.horizon = h;
        }
        if let Some(k) = self.k {
            if uncertainty {
                cfg.uncertainty.generations = k;
            } else {
                cfg.strategy.generations = k;
            }
        }
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
            cfg.sampling.seed = Some(seed);
        }
        if let Some(dir) = &self.cache_dir {
            cfg.run.cache_dir = Some(dir.clone());
        }
        if let Some(out) = &self.out {
            cfg.run.out = out.clone();
        }
        cfg.validate()?;
        let opts = RunOptions {
            run_dir: self.run_dir.clone(),
            stop_after: None,
        };
        Ok((cfg, opts))
    }
}

fn run(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::Forecast(o) => {
            let (cfg, opts) = o.resolve(false)?;
            let outcome = cmd_forecast(&cfg, &opts)?;
            println!("{}", outcome.run_dir.display());
            let metric =
                |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
            for row in &outcome.summary {
                println!(
                    "{} {} mse={} mae={} n={} failure_rate={}",
                    row.variant,
                    row.strategy,
                    metric(row.mse),
                    metric(row.mae),
                    row.count,
                    row.failure_rate
                );
            }
            Ok(outcome.within_tolerance)
        }
        Command::Sweep(o) => {
            let (cfg, opts) = o.resolve(false)?;
            let outcome = cmd_sweep(&cfg, &opts)?;
            println!("{}", outcome.sweep_dir.join("sweep.csv").display());
            Ok(outcome.within_tolerance)
        }
        Command::Uncertainty(o) => {
            let (cfg, opts) = o.resolve(true)?;
            let outcome = cmd_uncertainty(&cfg, &opts)?;
            println!("{}", outcome.run.run_dir.join("uncertainty").display());
            Ok(outcome.run.within_tolerance)
        }
        Command::Ablate(o) => {
            let (cfg, opts) = o.resolve(false)?;
            let (dir, _) = cmd_ablate(&cfg, &opts)?;
            println!("{}", dir.join("ablation.csv").display());
            Ok(true)
        }
        Command::Diagnose { run_dir } => {
            let report = cmd_diagnose(&run_dir, None)?;
            for (mode, count) in &report.counts {
                println!("{mode}: {count}/{}", report.diagnosed);
            }
            if report.malformed > 0 {
                println!("skipped {} malformed record(s)", report.malformed);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("failure rate exceeded the configured tolerance");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
