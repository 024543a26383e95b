use thiserror::Error;

use crate::lnn::TrainReport;

pub type Result<T> = std::result::Result<T, NtdError>;

#[derive(Debug, Error)]
pub enum NtdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at iteration {iteration}: {what}")]
    Numeric { iteration: usize, what: String },

    #[error("training diverged at epoch {epoch}: non-finite parameter")]
    Diverged {
        epoch: usize,
        partial: Box<TrainReport>,
    },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl NtdError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        NtdError::Shape { op, left, right }
    }

    /// True for errors caused by bad caller input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            NtdError::Shape { .. }
                | NtdError::Invalid(_)
                | NtdError::Domain(_)
                | NtdError::Parse(_)
        )
    }
}
