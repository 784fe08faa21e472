use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum QcaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {what} = {requested} (limit {limit})")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no bracket: {0}")]
    Bracket(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    /// A trajectory branch was selected whose probability underflowed; the
    /// caller should redraw.
    #[error("zero-norm branch selected, resample")]
    Resample,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QcaError>;
