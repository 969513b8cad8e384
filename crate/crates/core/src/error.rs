use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("layers {index} and {next} are not shape-compatible: {reason}", next = .index + 1)]
    ShapeMismatch { index: usize, reason: String },
    #[error("job error: {0}")]
    Job(String),
    #[error("accumulator overflow at output ({row}, {input})")]
    AccumulatorOverflow { row: usize, input: usize },
    #[error("argument error: {0}")]
    Argument(String),
    #[error(
        "{count} partitions exceed the enumeration budget of {budget}; use the threshold partitioner instead"
    )]
    BudgetExceeded { count: u128, budget: u128 },
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures reading or writing files, as opposed to bad arguments.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. }
        )
    }
}
