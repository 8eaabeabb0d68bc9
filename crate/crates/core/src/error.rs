use thiserror::Error;

use crate::detkit::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge to {target_digits} digits by level {level} (last agreement {achieved_digits:.1} digits)")]
    ConvergenceFailure {
        level: u32,
        target_digits: u32,
        achieved_digits: f64,
    },

    #[error("moment table self-check failed: {0}")]
    SelfCheck(String),

    #[error("extent exceeded: {0}")]
    ExtentExceeded(String),

    #[error("singular pivot in elimination at step {step} of {size}")]
    SingularPivot { step: usize, size: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("length mismatch: expected at least {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} unavailable in {mode} mode")]
    Unavailable { what: String, mode: String },

    #[error("normalizer of {family:?}_{n} at (s={s}, t={t}) vanishes")]
    NormalizerZero { family: Family, n: i64, s: u32, t: u32 },

    #[error("branch ambiguity: both roots equidistant from the reference at {0}")]
    BranchAmbiguity(String),

    #[error("degenerate quadratic: {0}")]
    Degenerate(String),

    #[error("roots are not representable: {0}")]
    NonRepresentableRoot(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
