use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("empty forecast set")]
    EmptyForecastSet,

    #[error("degenerate probability {value} at position {index}")]
    DegenerateProbability { index: usize, value: f64 },

    #[error("probability {value} at position {index} lies outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge: achieved error estimate {achieved:e}, requested {requested:e}")]
    QuadratureNonConvergent { achieved: f64, requested: f64 },

    #[error("degenerate series: k undefined")]
    DegenerateSeries,

    #[error("variance undefined for t-Student with nu = {nu} (requires nu > 2)")]
    VarianceUndefined { nu: f64 },

    #[error("insufficient history for backtest date {date}; first feasible date is {first_feasible}")]
    InsufficientHistory { date: NaiveDate, first_feasible: NaiveDate },

    #[error("backtest dates {first} and {second} are closer than the forecast horizon")]
    OverlappingDates { first: NaiveDate, second: NaiveDate },

    #[error("no completed backtest records")]
    NoRecords,

    #[error("no threshold available for {test} at tail probability {tail}")]
    MissingThreshold { test: String, tail: f64 },

    #[error("malformed input at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
