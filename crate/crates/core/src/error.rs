use thiserror::Error;

/// Errors raised by measure construction, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("empty input")]
    Empty,

    #[error("negative weight at index {idx}: {value}")]
    NegativeWeight { idx: usize, value: f64 },

    #[error("non-finite value at index {idx}: {value}")]
    NonFinite { idx: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("zero total mass")]
    ZeroMass,

    #[error("infeasible range constraint: mass intervals [{0}, {1}] and [{2}, {3}] are disjoint")]
    RangeInfeasible(f64, f64, f64, f64),

    #[error("kernel mode underflow: min(C)/eps = {0} exceeds 700")]
    KernelUnderflow(f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("plan mass collapsed to {0:e}")]
    MassCollapse(f64),

    #[error("argument {0} outside the Lambert W domain [-1/e, inf)")]
    LambertDomain(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors that come from the filesystem or from file contents.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
