//! Command dispatch for the `proxyaudit` binary.
//!
//! Every subcommand produces a [`Report`]: a JSON document echoing the
//! resolved configuration, the payload, and one warning per degenerate
//! estimate. Exit codes are 0 on success (warnings allowed), 2 on usage
//! errors and 1 when the computation fails outright.

mod commands;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub use commands::{
    AuditArgs, CounterexampleArgs, EstimatorChoice, OracleChoice, SampleArgs, ScanGammaArgs,
    SimulateArgs, StrategyChoice,
};
use proxyaudit::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "proxyaudit", version, about = "Equal-opportunity bias audits with noisy attribute classifiers")]
pub struct Cli {
    /// JSON object of flag values; explicit command-line flags win.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Where to write the JSON report (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate bias from predictions plus a set of records with true attributes.
    Audit(AuditArgs),
    /// Draw a seeded synthetic dataset with known ground truth.
    Simulate(SimulateArgs),
    /// Acquire true attributes batch by batch and track the estimates.
    Sample(SampleArgs),
    /// Evaluate the distortion factor along an error budget.
    ScanGamma(ScanGammaArgs),
    /// Reproduce the Bayes-optimal attribute classifier counterexample.
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub code: String,
    /// Report field the warning concerns, if any.
    pub field: Option<String>,
    pub message: String,
}

impl Warning {
    pub fn new(code: impl Into<String>, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            field: field.map(str::to_string),
            message: message.into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub seed: Option<u64>,
    pub payload: Value,
    pub warnings: Vec<Warning>,
    pub wall_time_ms: u64,
}

/// What a command hands back to the dispatcher.
pub struct Outcome {
    pub payload: Value,
    pub warnings: Vec<Warning>,
    /// Set when no requested estimate could be produced.
    pub failed: bool,
}

/// A command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(m) | Error::Config(m) => CliError::Usage(m),
            other => CliError::Failure(other),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(Error::Json(e))
    }
}

/// Parses `args`, runs the command and writes its report. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match dispatch(cli, &matches) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Failure(e)) => {
            eprintln!("error [{}]: {e}", e.code());
            EXIT_FAILURE
        }
    }
}

fn dispatch(cli: Cli, matches: &ArgMatches) -> Result<i32, CliError> {
    let config = match &cli.config {
        Some(path) => Some(proxyaudit::io::load_config(path).map_err(|e| match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Usage(other.to_string()),
        })?),
        None => None,
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let start = Instant::now();
    let (name, seed, echo, outcome) = match cli.command {
        Command::Audit(a) => {
            let a = overlay(a, config.as_ref(), sub)?;
            ("audit", Some(a.seed), serde_json::to_value(&a)?, commands::audit(&a)?)
        }
        Command::Simulate(a) => {
            let a = overlay(a, config.as_ref(), sub)?;
            ("simulate", Some(a.seed), serde_json::to_value(&a)?, commands::simulate(&a)?)
        }
        Command::Sample(a) => {
            let a = overlay(a, config.as_ref(), sub)?;
            ("sample", Some(a.seed), serde_json::to_value(&a)?, commands::sample(&a)?)
        }
        Command::ScanGamma(a) => {
            let a = overlay(a, config.as_ref(), sub)?;
            ("scan-gamma", None, serde_json::to_value(&a)?, commands::scan_gamma(&a)?)
        }
        Command::Counterexample(a) => {
            let a = overlay(a, config.as_ref(), sub)?;
            ("counterexample", None, serde_json::to_value(&a)?, commands::counterexample(&a)?)
        }
    };
    let report = Report {
        command: name,
        config: echo,
        seed,
        payload: outcome.payload,
        warnings: outcome.warnings,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    write_report(&report, cli.report.as_deref()).map_err(|e| CliError::Failure(e.into()))?;
    Ok(if outcome.failed { EXIT_FAILURE } else { EXIT_OK })
}

/// Replaces fields of `args` with config values unless the flag was given
/// explicitly on the command line.
fn overlay<A>(args: A, config: Option<&Map<String, Value>>, sub: &ArgMatches) -> Result<A, CliError>
where
    A: Serialize + DeserializeOwned,
{
    let Some(config) = config else {
        return Ok(args);
    };
    let Value::Object(mut fields) = serde_json::to_value(&args)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in config {
        if !fields.contains_key(key) {
            return Err(CliError::Usage(format!("config: unknown key `{key}`")));
        }
        if sub.value_source(key) == Some(ValueSource::CommandLine) {
            continue;
        }
        fields.insert(key.clone(), value.clone());
    }
    serde_json::from_value(Value::Object(fields))
        .map_err(|e| CliError::Usage(format!("config: {e}")))
}

pub fn write_report(report: &Report, path: Option<&Path>) -> io::Result<()> {
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)?;
    out.flush()
}
