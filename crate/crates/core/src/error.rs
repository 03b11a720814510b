use std::fmt;

use thiserror::Error;

pub type Result<T, E = GroveError> = std::result::Result<T, E>;

/// What went wrong with a single CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowProblem {
    FeatureOutOfRange,
    TreatmentNotBinary,
    MissingTreatment,
    Malformed(String),
}

impl fmt::Display for RowProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowProblem::FeatureOutOfRange => f.write_str("feature out of range"),
            RowProblem::TreatmentNotBinary => f.write_str("treatment not binary"),
            RowProblem::MissingTreatment => f.write_str("missing treatment"),
            RowProblem::Malformed(msg) => write!(f, "malformed row ({msg})"),
        }
    }
}

#[derive(Debug, Error)]
pub enum GroveError {
    #[error("{problem}, row {row}")]
    Row { row: usize, problem: RowProblem },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("tree {tree_index}: subsample lacks {min_leaf} observations of some treatment class")]
    DegenerateSubsample { tree_index: usize, min_leaf: usize },

    #[error("tree {tree_index}: no usable subsample after {attempts} draws")]
    RetryBudgetExhausted { tree_index: usize, attempts: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GroveError {
    pub(crate) fn row(row: usize, problem: RowProblem) -> Self {
        GroveError::Row { row, problem }
    }
}
