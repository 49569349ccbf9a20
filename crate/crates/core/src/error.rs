use thiserror::Error;

use crate::train::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation record was replayed a second time.
    #[error("computation record already consumed by a backward pass")]
    Consumed,

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("function evaluation returned a non-finite value: {0}")]
    Evaluation(String),

    #[error("input window is empty")]
    EmptyWindow,

    #[error("batch is empty")]
    EmptyBatch,

    /// Training produced a non-finite loss or gradient. Carries the history
    /// recorded up to the failure.
    #[error("training diverged: {what}")]
    Diverged {
        what: String,
        partial: Option<Box<TrainHistory>>,
    },

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("timestamps not strictly increasing at row {row}")]
    Ordering { row: usize },

    #[error("label `{value}` at row {row} is outside the vocabulary")]
    Label { row: usize, value: String },

    #[error("cannot parse `{value}` in column `{column}` at row {row}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("synthetic spec error: {0}")]
    Spec(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// True when the error originates from the filesystem.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
