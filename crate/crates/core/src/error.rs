use thiserror::Error;

/// Errors raised while validating problem data or running the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spectrum is empty")]
    EmptySpectrum,
    #[error("eigenvalue {index} has a zero denominator")]
    ZeroDenominator { index: usize },
    #[error("eigenvalue {index} is zero")]
    ZeroEigenvalue { index: usize },
    #[error("eigenvalues {first} and {second} are equal")]
    RepeatedEigenvalue { first: usize, second: usize },
    #[error("common denominator of the spectrum overflows i64")]
    SpectrumOverflow,
    #[error("input gain b[{index}] is zero or not finite")]
    ZeroInputGain { index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(
        "time weight k must be positive (got {0}); with k = 0 the infimum is \
         approached only as t_f -> infinity and is never attained"
    )]
    NonpositiveTimeWeight(f64),
    #[error("initial state entry {index} is not finite")]
    NonFiniteState { index: usize },
    #[error("max_switches must lie in 1..={max} (got {value})")]
    InvalidMaxSwitches { value: usize, max: usize },
    #[error("order {n} exceeds the supported limit {limit}")]
    OrderTooLarge { n: usize, limit: usize },
    #[error("order {n} is below the supported minimum {min}")]
    OrderTooSmall { n: usize, min: usize },
    #[error("sign vector is inconsistent with the template: {0}")]
    InconsistentSigns(String),
    #[error("value outside the domain: {0}")]
    DomainError(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("no instance converged to a verified solution (best residual seen {best_residual:.3e})")]
    InfeasibleProblem { best_residual: f64 },
    #[error("{0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
