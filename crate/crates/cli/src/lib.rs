//! The `closedform` command line, as a library so it can be driven
//! in-process.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

pub mod commands;

#[derive(Parser, Debug)]
#[command(name = "closedform", version, about = "Closed-form model discovery by description length")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (overrides the config's `jobs`).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample models for a dataset and report the MDL model.
    Discover {
        #[arg(long)]
        config: PathBuf,
        /// CSV with header `x1,...,xd,y` (overrides the config's `data`).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learnability sweep over the planted models.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write gnuplot data files.
        #[arg(long)]
        plot: bool,
    },
    /// Analytic transition noise for each planted model and N.
    Transition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every model of a small grammar exactly.
    Enumerate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict with a discovered model on test data.
    Predict {
        /// Report written by `discover`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Noise level of the test data, for RMSE/s.
        #[arg(long)]
        s_eps: Option<f64>,
    },
}

/// Marks errors caused by bad user input (exit code 1).
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InvalidInput>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<closedform::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    2
}

pub fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<closedform::config::RunConfig> {
    let mut cfg = closedform::config::RunConfig::load(path)
        .with_context(|| format!("config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn jobs_for(cli: &Cli) -> anyhow::Result<Option<usize>> {
    if cli.jobs.is_some() {
        return Ok(cli.jobs);
    }
    // peek at the config for its `jobs` field; full validation happens later
    let config = match &cli.command {
        Command::Discover { config, .. }
        | Command::Sweep { config, .. }
        | Command::Transition { config, .. }
        | Command::Enumerate { config, .. } => config,
        Command::Predict { .. } => return Ok(None),
    };
    Ok(std::fs::read_to_string(config)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("jobs").and_then(|j| j.as_u64()))
        .map(|j| j as usize))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Discover { config, data, out, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::discover(&cfg, data.as_deref(), out.as_deref())
        }
        Command::Sweep { config, out, seed, plot } => {
            let cfg = load_config(&config, seed)?;
            commands::sweep(&cfg, out.as_deref(), plot)
        }
        Command::Transition { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::transition(&cfg, out.as_deref())
        }
        Command::Enumerate { config, data, out, seed } => {
            let cfg = load_config(&config, seed)?;
            commands::enumerate(&cfg, data.as_deref(), out.as_deref())
        }
        Command::Predict { report, data, out, s_eps } => {
            commands::predict(&report, &data, out.as_deref(), s_eps)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 invalid input, 2 runtime failure.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = jobs_for(&cli).and_then(|jobs| {
        if jobs == Some(0) {
            return Err(InvalidInput("--jobs must be at least 1".into()).into());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.unwrap_or(0))
            .build()
            .context("starting worker pool")?;
        pool.install(|| run(cli))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
