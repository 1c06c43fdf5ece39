use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use proxyaudit::estimators::{ci_violation, naive_bias, true_bias};
use proxyaudit::io::{read_dataset, split_dataset, write_dataset, SplitSizes, SplitSpec};
use proxyaudit::report::{audit as run_audit, BiasReport, EstimatorSet};
use proxyaudit::sampling::{
    active_sampling, direct_estimation, direct_sampling, positive_sampling, uniform_sampling,
    ActiveConfig, AttributeOracle, BaselineConfig, EstimatorKind, FileExchangeOracle,
    InMemoryOracle, SamplingTrace, Target, Termination,
};
use proxyaudit::simulate::{exact_summary, sample_records, NegativeSlice, SimParams};
use proxyaudit::theory::{bayes_counterexample, gamma_scan, optimal_error_split, ErrorBudget};
use proxyaudit::{build_joint_table, AttributeSource, Cell, Error, PredictionRecord};

use crate::{CliError, Outcome, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Naive,
    Corrected,
    General,
    Direct,
    All,
}

impl EstimatorChoice {
    fn set(self) -> EstimatorSet {
        let only = |naive, corrected, general, direct| EstimatorSet {
            naive,
            corrected,
            general,
            direct,
        };
        match self {
            Self::Naive => only(true, false, false, false),
            Self::Corrected => only(false, true, false, false),
            Self::General => only(false, false, true, false),
            Self::Direct => only(false, false, false, true),
            Self::All => EstimatorSet::ALL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    Active,
    Uniform,
    Positive,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    /// True attributes carried in the input file.
    Inline,
    /// Request/answer CSV files in `--exchange-dir`.
    FileExchange,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    /// Evaluation predictions (CSV with id,y,y_hat,a_hat and optionally a,score).
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = EstimatorChoice::All)]
    pub estimator: EstimatorChoice,

    /// Records with both true and predicted attributes. Without this or
    /// `--labeled-fraction`, every input record carrying `a` is used.
    #[arg(long, value_name = "CSV", conflicts_with = "labeled_fraction")]
    pub common_data: Option<PathBuf>,

    /// Carve this fraction of the input off as common data.
    #[arg(long, value_name = "F")]
    pub labeled_fraction: Option<f64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub r: f64,
    #[arg(long, default_value_t = 0.25)]
    pub s: f64,
    #[arg(long, default_value_t = 0.2)]
    pub g1: f64,
    #[arg(long, default_value_t = 0.3)]
    pub g2: f64,
    /// In [-1, 1]; zero gives conditionally independent classifiers.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub coupling: f64,
    #[arg(long, default_value_t = 0.15)]
    pub score_noise: f64,

    /// `P(y_hat=1 | y=0, a=1)`; defaults to `1 - alpha`.
    #[arg(long)]
    pub fpr_a1: Option<f64>,
    /// `P(y_hat=1 | y=0, a=0)`; defaults to `1 - beta`.
    #[arg(long)]
    pub fpr_a0: Option<f64>,
    /// Attribute error for `a=0, y=0`; defaults to `g1`.
    #[arg(long)]
    pub neg_g1: Option<f64>,
    /// Attribute error for `a=1, y=0`; defaults to `g2`.
    #[arg(long)]
    pub neg_g2: Option<f64>,

    #[arg(short = 'n', long = "records", default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Dataset CSV to write.
    #[arg(short = 'o', long, value_name = "CSV")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Pool of predictions; `score` is required for the active strategy.
    pub input: PathBuf,

    #[arg(long, value_enum, default_value_t = StrategyChoice::Active)]
    pub strategy: StrategyChoice,

    /// Candidates per round (batch size for the baselines).
    #[arg(short = 'b', long = "batch", default_value_t = 100)]
    pub b: usize,

    /// Labels revealed per active round.
    #[arg(short = 'w', long = "window", default_value_t = 100)]
    pub w: usize,

    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,

    #[arg(long, value_enum, default_value_t = OracleChoice::Inline)]
    pub oracle: OracleChoice,

    #[arg(long, value_name = "DIR", required_if_eq("oracle", "file-exchange"))]
    pub exchange_dir: Option<PathBuf>,

    /// Seconds to wait for each answer file.
    #[arg(long, default_value_t = 3600.0)]
    pub oracle_timeout: f64,

    #[arg(long)]
    pub budget: Option<usize>,

    #[arg(long, default_value_t = proxyaudit::sampling::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,

    /// Pseudo-count per labeled-positive cell when estimating error rates.
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,

    /// Stop a baseline once its estimate is within this distance of the
    /// pool's true bias (needs `a` on every record).
    #[arg(long, value_name = "TOL")]
    pub stop_within: Option<f64>,

    /// Per-iteration trace CSV to write.
    #[arg(long, value_name = "CSV")]
    pub trace_csv: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScanGammaArgs {
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub s: f64,
    /// Error budget `s g1 + r g2`.
    #[arg(long = "U", alias = "u")]
    pub u: f64,
    #[arg(long, default_value_t = proxyaudit::theory::DEFAULT_SCAN_STEP)]
    pub step: f64,
    /// Curve CSV (g1,g2,gamma) to write.
    #[arg(short = 'o', long, value_name = "CSV")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CounterexampleArgs {}

fn bias_warnings(report: &BiasReport) -> Vec<Warning> {
    let mut out: Vec<Warning> = report
        .degenerate()
        .into_iter()
        .map(|(field, reason)| Warning::new(reason.code, Some(field), reason.message.clone()))
        .collect();
    if report.corrected_clamped {
        out.push(Warning::new(
            "CorrectedClamped",
            Some("corrected"),
            "naive gap divided by gamma exceeded one and was clamped",
        ));
    }
    out
}

pub fn audit(args: &AuditArgs) -> Result<Outcome, CliError> {
    let data = read_dataset(&args.input)?.records;
    let (evaluation, common, source) = match (&args.common_data, args.labeled_fraction) {
        (Some(path), _) => (data, read_dataset(path)?.records, "file"),
        (None, Some(f)) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::Usage(format!("--labeled-fraction {f} must lie in (0, 1)")));
            }
            let spec = SplitSpec {
                sizes: SplitSizes::Fractions([0.0, 1.0 - f, f]),
                seed: args.seed,
            };
            let parts = split_dataset(&data, &spec)?;
            (parts.evaluation, parts.common, "split")
        }
        (None, None) => {
            let common = data.iter().filter(|r| r.a.is_some()).cloned().collect();
            (data, common, "input")
        }
    };
    let set = args.estimator.set();
    let report = run_audit(&evaluation, &common, set)?;
    let warnings = bias_warnings(&report);
    let failed = !report.any_requested_value(set);
    Ok(Outcome {
        payload: json!({
            "inputs": {
                "evaluation_records": evaluation.len(),
                "common_records": common.len(),
                "common_source": source,
            },
            "report": report,
        }),
        warnings,
        failed,
    })
}

fn sim_params(args: &SimulateArgs) -> SimParams {
    let mut params = SimParams {
        alpha: args.alpha,
        beta: args.beta,
        r: args.r,
        s: args.s,
        g1: args.g1,
        g2: args.g2,
        negative: None,
        coupling: args.coupling,
        score_noise: args.score_noise,
        seed: args.seed,
    };
    if args.fpr_a1.is_some() || args.fpr_a0.is_some() || args.neg_g1.is_some() || args.neg_g2.is_some() {
        let mirror = params.negative_slice();
        params.negative = Some(NegativeSlice {
            fpr_a1: args.fpr_a1.unwrap_or(mirror.fpr_a1),
            fpr_a0: args.fpr_a0.unwrap_or(mirror.fpr_a0),
            g1: args.neg_g1.unwrap_or(mirror.g1),
            g2: args.neg_g2.unwrap_or(mirror.g2),
            ..mirror
        });
    }
    params
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("-n must be at least 1".into()));
    }
    let params = sim_params(args);
    let exact = exact_summary(&params)?;
    let records = sample_records(&params, args.n as usize)?;
    let table = build_joint_table(&records, AttributeSource::Both)?;
    let empirical = json!({
        "true_bias": true_bias(&table).ok(),
        "naive_bias": naive_bias(&table).ok(),
        "ci_violation": ci_violation(&table).ok(),
    });
    if let Some(path) = &args.output {
        write_dataset(path, &records)?;
    }
    let mut warnings = Vec::new();
    if params.negative.is_none() {
        warnings.push(Warning::new(
            "DefaultNegativeSlice",
            Some("params.negative"),
            "y=0 conditionals mirror the y=1 slice; they are a modeling choice",
        ));
    }
    Ok(Outcome {
        payload: json!({
            "params": params,
            "negative_slice": params.negative_slice(),
            "n": args.n,
            "exact": exact,
            "empirical": empirical,
        }),
        warnings,
        failed: false,
    })
}

fn write_trace_csv(path: &Path, trace: &SamplingTrace) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration", "labels_used", "g1", "g2", "delta1", "delta2", "r_hat", "s_hat", "estimator",
        "estimate", "general", "plug_in", "direct",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &trace.snapshots {
        let kind = match s.estimator {
            EstimatorKind::General => "general",
            EstimatorKind::PlugIn => "plug_in",
            EstimatorKind::Direct => "direct",
        };
        w.write_record([
            s.iteration.to_string(),
            s.labels_used.to_string(),
            opt(s.g1),
            opt(s.g2),
            opt(s.delta1),
            opt(s.delta2),
            opt(s.r_hat),
            opt(s.s_hat),
            kind.to_string(),
            opt(s.estimate),
            opt(s.general),
            opt(s.plug_in),
            opt(s.direct),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pool_truth(pool: &[PredictionRecord]) -> Option<f64> {
    pool.iter()
        .all(|r| r.a.is_some())
        .then(|| direct_estimation(pool).ok())
        .flatten()
}

pub fn sample(args: &SampleArgs) -> Result<Outcome, CliError> {
    let pool = read_dataset(&args.input)?.records;
    let truth = pool_truth(&pool);
    let mut oracle: Box<dyn AttributeOracle> = match args.oracle {
        OracleChoice::Inline => Box::new(InMemoryOracle::from_records(&pool)?),
        OracleChoice::FileExchange => {
            let dir = args
                .exchange_dir
                .as_ref()
                .ok_or_else(|| CliError::Usage("--exchange-dir is required".into()))?;
            if !(args.oracle_timeout.is_finite() && args.oracle_timeout >= 0.0) {
                return Err(CliError::Usage("--oracle-timeout must be nonnegative".into()));
            }
            Box::new(FileExchangeOracle::new(dir, Duration::from_secs_f64(args.oracle_timeout))?)
        }
    };
    let outcome = match args.strategy {
        StrategyChoice::Active => {
            if args.stop_within.is_some() {
                return Err(CliError::Usage("--stop-within applies to the baseline strategies".into()));
            }
            let config = ActiveConfig {
                b: args.b,
                w: args.w,
                epsilon: args.epsilon,
                max_iters: args.max_iters,
                budget: args.budget,
                smoothing: args.smoothing,
                seed: args.seed,
            };
            active_sampling(&pool, &config, oracle.as_mut())?
        }
        baseline => {
            let estimator = match baseline {
                StrategyChoice::Direct => EstimatorKind::Direct,
                _ => EstimatorKind::General,
            };
            let target = match args.stop_within {
                Some(tolerance) => Some(Target {
                    true_bias: truth.ok_or_else(|| {
                        CliError::Usage("--stop-within needs the true attribute on every record".into())
                    })?,
                    tolerance,
                    estimator,
                }),
                None => None,
            };
            let config = BaselineConfig {
                batch: args.b,
                max_iters: args.max_iters,
                budget: args.budget,
                smoothing: args.smoothing,
                seed: args.seed,
                target,
            };
            match baseline {
                StrategyChoice::Uniform => uniform_sampling(&pool, &config, oracle.as_mut())?,
                StrategyChoice::Positive => positive_sampling(&pool, &config, oracle.as_mut())?,
                _ => direct_sampling(&pool, &config, oracle.as_mut())?,
            }
        }
    };
    if let Some(path) = &args.trace_csv {
        write_trace_csv(path, &outcome.trace)?;
    }
    let mut warnings = Vec::new();
    if let Some(err) = &outcome.estimate_error {
        warnings.push(Warning::new(err.code, Some("estimate"), err.message.clone()));
    }
    if outcome.trace.termination == Termination::MaxIters {
        warnings.push(Warning::new(
            "MaxIters",
            Some("termination"),
            format!("stopped after {} iterations without converging", args.max_iters),
        ));
    }
    Ok(Outcome {
        payload: json!({
            "strategy": outcome.trace.strategy,
            "pool": {
                "records": pool.len(),
                "positives": pool.iter().filter(|r| r.y).count(),
                "true_bias": truth,
            },
            "estimate": outcome.estimate,
            "estimate_abs": outcome.estimate.map(f64::abs),
            "termination": outcome.trace.termination,
            "labels_used": outcome.trace.labels_used(),
            "oracle": {
                "queries_used": outcome.oracle.queries_used,
                "budget": outcome.oracle.budget,
            },
            "trace": outcome.trace.snapshots,
        }),
        failed: outcome.estimate.is_none(),
        warnings,
    })
}

pub fn scan_gamma(args: &ScanGammaArgs) -> Result<Outcome, CliError> {
    let scan = gamma_scan(args.r, args.s, args.u, args.step)?;
    if let Some(path) = &args.output {
        let file = std::fs::File::create(path).map_err(Error::from)?;
        scan.write_csv(std::io::BufWriter::new(file))?;
    }
    let closed_form = if args.r == args.s {
        Some(optimal_error_split(ErrorBudget::new(args.u, args.r)?)?)
    } else {
        None
    };
    let mut warnings = Vec::new();
    if scan.points.iter().any(|p| p.singular) {
        warnings.push(Warning::new(
            "SingularCorner",
            Some("points"),
            "gamma is 0/0 at a corner of the unit square; the limit along the budget line is reported",
        ));
    }
    let argmax: Vec<_> = scan.argmax_points().collect();
    Ok(Outcome {
        payload: json!({
            "interval": scan.interval,
            "points": scan.points.len(),
            "max_gamma": scan.max_gamma(),
            "argmax": argmax,
            "closed_form": closed_form,
        }),
        warnings,
        failed: false,
    })
}

pub fn counterexample(_: &CounterexampleArgs) -> Result<Outcome, CliError> {
    let ce = bayes_counterexample();
    let exact_true = ce.table.exact_true_bias()?;
    let exact_naive = ce.table.exact_naive_bias()?;
    let records = ce.records();
    let report = run_audit(&records, &records, EstimatorSet::ALL)?;
    let cells: Vec<Value> = Cell::all()
        .filter_map(|c| {
            let m = ce.table.cell_mass(c);
            (m > 0.0).then(|| json!({"y": c.y, "a": c.a, "y_hat": c.y_hat, "a_hat": c.a_hat, "mass": m}))
        })
        .collect();
    let ratio = |r: &proxyaudit::table::ExactRatio| {
        json!({"exact": r.to_string(), "value": *r.numer() as f64 / *r.denom() as f64})
    };
    Ok(Outcome {
        payload: json!({
            "rows": ce.rows,
            "cells": cells,
            "true_bias": ratio(&exact_true),
            "naive_bias": ratio(&exact_naive),
            "report": report,
        }),
        warnings: bias_warnings(&report),
        failed: false,
    })
}
