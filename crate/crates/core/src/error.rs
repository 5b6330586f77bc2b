use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interval index {index} out of range 1..={intervals}")]
    IndexOutOfRange { index: usize, intervals: usize },

    #[error("singular pivot {pivot:e} at row {row}")]
    SingularPivot { row: usize, pivot: f64 },

    #[error("singular matrix at column {0}")]
    SingularMatrix(usize),

    #[error("trajectory grid does not match the control grid")]
    GridMismatch,

    #[error("non-finite state at node {0}")]
    NonFiniteState(usize),

    #[error("non-finite adjoint at node {0}")]
    NonFiniteAdjoint(usize),

    #[error("class {class} has only {available} grid points, {required} required")]
    InsufficientClassPopulation {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
