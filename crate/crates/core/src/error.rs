use std::path::PathBuf;

use thiserror::Error;

use crate::table::Axis;

/// Which protected group a missing-mass error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// `y = 1, a = 1`, the mass behind `r`.
    PositiveA1,
    /// `y = 1, a = 0`, the mass behind `s`.
    PositiveA0,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no records supplied")]
    EmptyInput,

    #[error("record `{id}` is missing required field `{field}`")]
    MissingField { id: String, field: &'static str },

    #[error("table has no `{0:?}` axis")]
    MissingAxis(Axis),

    #[error("no probability mass on group {0:?}")]
    MissingGroup(Group),

    #[error("no probability mass on predicted group a_hat={}", u8::from(*a_hat))]
    EmptyPredictedGroup { a_hat: bool },

    #[error("conditioning event `{event}` has zero mass")]
    MissingConditioningEvent { event: &'static str },

    #[error("denominator `{which}` is zero")]
    ZeroDenominator { which: &'static str },

    #[error("distortion factor {gamma} is at or below the invertibility threshold")]
    UninvertibleDistortion { gamma: f64 },

    #[error("1 - delta1 - delta2 = {denominator} is at or below the invertibility threshold")]
    DegenerateDeltas { denominator: f64 },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no (g1, g2) in [0,1]^2 satisfies the error budget: {0}")]
    InfeasibleBudget(String),

    #[error("label classifier is Bayes optimal on the base distribution (region {region} is empty)")]
    BayesOptimalInput { region: &'static str },

    #[error("pool exhausted: need {needed} unlabeled positives, {available} remain")]
    PoolExhausted { needed: usize, available: usize },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable reason code, used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInput => "EmptyInput",
            Error::MissingField { .. } => "MissingField",
            Error::MissingAxis(_) => "MissingAxis",
            Error::MissingGroup(_) => "MissingGroup",
            Error::EmptyPredictedGroup { .. } => "EmptyPredictedGroup",
            Error::MissingConditioningEvent { .. } => "MissingConditioningEvent",
            Error::ZeroDenominator { .. } => "ZeroDenominator",
            Error::UninvertibleDistortion { .. } => "UninvertibleDistortion",
            Error::DegenerateDeltas { .. } => "DegenerateDeltas",
            Error::InvalidTable(_) => "InvalidTable",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InfeasibleBudget(_) => "InfeasibleBudget",
            Error::BayesOptimalInput { .. } => "BayesOptimalInput",
            Error::PoolExhausted { .. } => "PoolExhausted",
            Error::Oracle(_) => "OracleFailure",
            Error::InfeasibleSplit(_) => "InfeasibleSplit",
            Error::Parse { .. } => "ParseError",
            Error::Schema { .. } => "SchemaError",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
