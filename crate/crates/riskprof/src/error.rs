use thiserror::Error;

/// Library-wide error type. Variants carry enough context to be rendered
/// as machine-readable JSON by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative probability {value} at grid level {level}{}", stock_suffix(.stock))]
    NegativeProbability {
        stock: Option<String>,
        level: i64,
        value: f64,
    },

    #[error("probabilities sum to {sum} (deviation {deviation:+e}){}", stock_suffix(.stock))]
    SumNotOne {
        stock: Option<String>,
        sum: f64,
        deviation: f64,
    },

    #[error("nonzero probability {value} at grid level {level} is below floor {floor}{}", stock_suffix(.stock))]
    FloorViolation {
        stock: Option<String>,
        level: i64,
        value: f64,
        floor: f64,
    },

    #[error("grid mismatch: {detail}")]
    GridMismatch { detail: String },

    #[error("invalid grid: {detail}")]
    InvalidGrid { detail: String },

    #[error("invalid portfolio: {detail}")]
    InvalidPortfolio { detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid joint table: {detail}")]
    InvalidTable { detail: String },

    #[error("average-case objectives are not supported by extremal solvers")]
    AverageCaseNotSupported,

    #[error("objective is not average-case")]
    NonAverageObjective,

    #[error("invalid tolerance {name}={value}; must lie in (0, 1)")]
    InvalidTolerance { name: &'static str, value: f64 },

    #[error("walk start point is outside the polytope: {detail}")]
    InfeasibleStart { detail: String },

    #[error("internal invariant violated: {detail}")]
    InvariantViolation { detail: String },

    #[error("problem size {needed} exceeds budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex iteration limit reached after {iterations} pivots")]
    IterationLimit { iterations: usize },

    #[error("weight {weight} of stock {index} is not a multiple of 1/{cents}")]
    NotOnCentLattice {
        index: usize,
        weight: f64,
        cents: u64,
    },

    #[error("series {ticker}: needs at least {needed} observations, got {got}")]
    InsufficientData {
        ticker: String,
        needed: usize,
        got: usize,
    },

    #[error("series {ticker}: non-positive price {price} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("series {ticker}: dates are not strictly increasing at {date}")]
    NonMonotoneDates { ticker: String, date: String },

    #[error("cannot parse {text:?} as a number")]
    InvalidNumber { text: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn stock_suffix(stock: &Option<String>) -> String {
    match stock {
        Some(name) => format!(" in stock {name}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable machine-readable code for the CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeProbability { .. } => "NegativeProbability",
            Error::SumNotOne { .. } => "SumNotOne",
            Error::FloorViolation { .. } => "FloorViolation",
            Error::GridMismatch { .. } => "GridMismatch",
            Error::InvalidGrid { .. } => "InvalidGrid",
            Error::InvalidPortfolio { .. } => "InvalidPortfolio",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidTable { .. } => "InvalidTable",
            Error::AverageCaseNotSupported => "AverageCaseNotSupported",
            Error::NonAverageObjective => "NonAverageObjective",
            Error::InvalidTolerance { .. } => "InvalidTolerance",
            Error::InfeasibleStart { .. } => "InfeasibleStart",
            Error::InvariantViolation { .. } => "InvariantViolation",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::Infeasible => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::IterationLimit { .. } => "IterationLimit",
            Error::NotOnCentLattice { .. } => "NotOnCentLattice",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::NonPositivePrice { .. } => "NonPositivePrice",
            Error::NonMonotoneDates { .. } => "NonMonotoneDates",
            Error::InvalidNumber { .. } => "InvalidNumber",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// True for errors caused by bad input data (CLI exit code 2) as opposed
    /// to internal failures (exit code 1).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::InvariantViolation { .. }
                | Error::Unbounded
                | Error::IterationLimit { .. }
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
