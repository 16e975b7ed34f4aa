use std::path::PathBuf;

use crate::sinkhorn::{PotentialPair, SolveReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Iterate returned by a solver run that hit its iteration budget.
#[derive(Debug, Clone)]
pub struct Unconverged {
    pub pair: PotentialPair,
    pub report: SolveReport,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed measure file at line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },

    #[error("weights do not form a probability vector (sum = {sum}, min = {min})")]
    NonSimplexWeights { sum: f64, min: f64 },

    #[error("measure has no atoms")]
    EmptySupport,

    #[error("regularization must be positive, got {0}")]
    NonPositiveEps(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error(
        "solver did not converge in {} iterations (residual {:e})",
        .0.report.iterations,
        .0.report.final_residual
    )]
    NotConverged(Box<Unconverged>),

    #[error("potential pair is not optimal: marginal residual {residual:e} exceeds {limit:e}")]
    NotOptimal { residual: f64, limit: f64 },

    #[error("transport plan has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("potential pair has normalization {found:?}, expected {expected:?}")]
    WrongNormalization { expected: crate::sinkhorn::Normalization, found: crate::sinkhorn::Normalization },

    #[error("derivative order {order} is not supported (max {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("{name} = {value} is outside its admissible range")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid experiment config at line {line}: {reason}")]
    InvalidConfig { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
