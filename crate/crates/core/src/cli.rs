//! Command-line front end: run, report, validate and replay.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::engine::{digest_trace_text, TraceLog};
use crate::scenario::config::SystemConfig;
use crate::scenario::report::{emit_report, read_jsonl, ReportFormat};
use crate::scenario::runner::{run_scenario, run_scenario_traced, RunOptions, ScenarioId, ScenarioSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sdcps",
    version,
    about = "Hierarchical software-defined control plane simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum CliCommand {
    /// Run a scenario sweep and write its metrics.
    Run(RunArgs),
    /// Re-emit records from a JSON-lines results file.
    Report(ReportArgs),
    /// Check a config file without running anything.
    Validate(ValidateArgs),
    /// Re-run a traced scenario and compare trace digests.
    Replay(ReplayArgs),
}

/// Inclusive seed range written `N..M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected N..M, got {s:?}"))?;
        let first = a.trim().parse().map_err(|e| format!("bad seed {a:?}: {e}"))?;
        let last = b.trim().parse().map_err(|e| format!("bad seed {b:?}: {e}"))?;
        if last < first {
            return Err(format!("empty seed range {s}"));
        }
        Ok(Self { first, last })
    }
}

#[derive(Debug, Args, PartialEq)]
pub struct SelectArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub scenario: ScenarioId,
    /// Single seed; defaults to the config's seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Inclusive range of seeds, e.g. 1..5.
    #[arg(long)]
    pub seeds: Option<SeedRange>,
}

impl SelectArgs {
    pub fn seed_list(&self, config: &SystemConfig) -> Vec<u64> {
        match (self.seed, self.seeds) {
            (_, Some(r)) => (r.first..=r.last).collect(),
            (Some(s), None) => vec![s],
            (None, None) => vec![config.seed],
        }
    }
}

#[derive(Debug, Args, PartialEq)]
pub struct RunArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    /// Write the event trace here. Cells then run one at a time.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, PartialEq)]
pub struct ReportArgs {
    /// JSON-lines file written by `run --format jsonl`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
}

#[derive(Debug, Args, PartialEq)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Also check the scenario's sweep overrides.
    #[arg(long)]
    pub scenario: Option<ScenarioId>,
}

#[derive(Debug, Args, PartialEq)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub select: SelectArgs,
    /// Trace file recorded by `run --trace`.
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

pub fn parse_cli<I, T>(argv: I) -> Result<CliCommand, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|c| c.command)
}

fn load(select: &SelectArgs) -> Result<(SystemConfig, ScenarioSpec, Vec<u64>), CliError> {
    let config = SystemConfig::load(&select.config).map_err(domain)?;
    let spec = ScenarioSpec::from_config(select.scenario, &config).map_err(domain)?;
    let seeds = select.seed_list(&config);
    Ok((config, spec, seeds))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| domain(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn execute(cmd: &CliCommand) -> Result<(), CliError> {
    match cmd {
        CliCommand::Validate(a) => {
            let config = SystemConfig::load(&a.config).map_err(domain)?;
            if let Some(id) = a.scenario {
                ScenarioSpec::from_config(id, &config).map_err(domain)?;
            }
            log::info!("{} is valid", a.config.display());
            Ok(())
        }
        CliCommand::Run(a) => {
            let (config, spec, seeds) = load(&a.select)?;
            let records = match &a.trace {
                Some(path) => {
                    let file = File::create(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
                    let trace = TraceLog::with_sink(Box::new(BufWriter::new(file)));
                    let (records, trace) = run_scenario_traced(&spec, &config, &seeds, trace).map_err(domain)?;
                    let (digest, sink) = trace.finish().map_err(domain)?;
                    if let Some(mut s) = sink {
                        s.flush().map_err(domain)?;
                    }
                    log::info!("trace digest {digest}");
                    records
                }
                None => {
                    let mut options = RunOptions::default();
                    if let Some(t) = a.threads {
                        options.threads = t.max(1);
                    }
                    run_scenario(&spec, &config, &seeds, options).map_err(domain)?
                }
            };
            let mut out = open_out(a.out.as_deref())?;
            emit_report(&records, a.format, &mut out).map_err(domain)
        }
        CliCommand::Report(a) => {
            let text = std::fs::read_to_string(&a.input).map_err(|e| domain(format!("{}: {e}", a.input.display())))?;
            let records = read_jsonl(&text).map_err(domain)?;
            let mut out = open_out(a.out.as_deref())?;
            emit_report(&records, a.format, &mut out).map_err(domain)
        }
        CliCommand::Replay(a) => {
            let recorded =
                std::fs::read_to_string(&a.trace).map_err(|e| domain(format!("{}: {e}", a.trace.display())))?;
            let expected = digest_trace_text(&recorded);
            let (config, spec, seeds) = load(&a.select)?;
            let (_, trace) = run_scenario_traced(&spec, &config, &seeds, TraceLog::new()).map_err(domain)?;
            let actual = trace.digest();
            if actual == expected {
                log::info!("replay matches: {actual}");
                Ok(())
            } else {
                Err(CliError::Domain(format!(
                    "trace digest mismatch: recorded {expected}, replayed {actual}"
                )))
            }
        }
    }
}

/// Parses `argv`, executes the command and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cmd = match parse_cli(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cmd) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
