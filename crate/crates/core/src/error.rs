use thiserror::Error;

/// Errors produced by the solvers, the data model and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time {value} outside the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fixed-point iteration did not converge at node {node} (last update {update:e})")]
    PicardDivergence { node: usize, update: f64 },

    #[error("singular linear step at node {0}")]
    SingularStep(usize),

    #[error("enumeration guard exceeded: {0} candidate controls")]
    EnumerationGuard(u128),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("control point {0:?} is not a member of the control set")]
    ControlNotInSet(Vec<f64>),

    #[error("unsupported argument: {0}")]
    Unsupported(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical schemes, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::PicardDivergence { .. } | Error::SingularStep(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
