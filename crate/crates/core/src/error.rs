use thiserror::Error;

use crate::optim::TrainingTrace;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative order {0} is not supported (at most 2)")]
    UnsupportedOrder(usize),

    #[error("a derivative of order {required} was requested from a jet of order {available}")]
    MissingDerivative { required: usize, available: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0} point set is empty")]
    EmptyPointSet(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("both magnitude bounds are zero")]
    DegenerateBounds,

    #[error("boundary data vanishes on the boundary; magnitude normalization would admit the zero function")]
    HomogeneousBoundary,

    #[error("reference solution vanishes on every evaluation point")]
    ZeroReference,

    #[error("problem `{problem}` has no analytic solution")]
    NoAnalyticSolution { problem: String },

    #[error("analytic solution is inconsistent with the problem: residual {0:e}")]
    InconsistentSolution(f64),

    #[error("training failed after {} recorded checks: {source}", trace.records.len())]
    Training {
        source: Box<Error>,
        trace: Box<TrainingTrace>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("parameter file: {0}")]
    ParamsFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
