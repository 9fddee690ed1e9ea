//! `qaoi`: index tables, simulations, property checks and lower bounds for
//! QAoI scheduling, driven by one JSON config.
//!
//! Exit codes: 0 success, 1 a property check failed, 2 bad configuration,
//! 3 numerical or structural failure.

mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::cache::TableCache;
use crate::commands::Rows;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{emit, render, Format, Meta};

#[derive(Debug, Parser)]
#[command(name = "qaoi", version, about = "Whittle-index scheduling for query age of information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Whittle index of every state of every arm.
    Index(Common),
    /// Monte-Carlo evaluation of each configured policy, plus the lower bound.
    Simulate(Common),
    /// Indexability, threshold, index-oracle and stationary-law checks.
    Verify(Common),
    /// Lower bound on the average QAoI from the relaxed budget.
    LowerBound(Common),
    /// Optimal thresholds and passive-set size along a cost grid.
    Sweep(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override a config field, e.g. `--set runs=100 --set arms.0.p=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Index(c) => ("index", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Verify(c) => ("verify", c),
            Command::LowerBound(c) => ("lower-bound", c),
            Command::Sweep(c) => ("sweep", c),
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let (name, common) = cli.command.parts();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    let config = ExperimentConfig::load(&common.config, &common.overrides)?;
    let cache = TableCache::from_env();
    let out = match cli.command {
        Command::Index(_) => commands::index(&config, &cache)?,
        Command::Simulate(_) => commands::simulate(&config, &cache)?,
        Command::Verify(_) => commands::verify(&config, &cache)?,
        Command::LowerBound(_) => commands::lower_bound(&config, &cache)?,
        Command::Sweep(_) => commands::sweep(&config, &cache)?,
    };
    let meta = Meta {
        tool: "qaoi",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        config_hash: config.hash(),
        seed: config.seed,
        error_free: out.error_free,
    };
    let tables = out.tables.as_ref();
    let bytes = match &out.rows {
        Rows::Index(r) => render(&meta, r, tables, common.format),
        Rows::Simulate(r) => render(&meta, r, tables, common.format),
        Rows::Verify(r) => render(&meta, r, tables, common.format),
        Rows::Bound(r) => render(&meta, r, tables, common.format),
        Rows::Sweep(r) => render(&meta, r, tables, common.format),
    }?;
    emit(&bytes, common.out.as_deref())?;
    for f in &out.failures {
        eprintln!("qaoi: property failed: {f}");
    }
    Ok(out.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("qaoi: {e}");
            e.exit_code()
        }
    }
}
