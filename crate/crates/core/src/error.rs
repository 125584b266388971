use thiserror::Error;

/// Errors raised by the metric, inference and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for space of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("measures live on different metric spaces")]
    SpaceMismatch,

    #[error("support of size {size} exceeds the enumeration limit {limit}")]
    SupportTooLarge { size: usize, limit: usize },

    /// Prior and likelihood are mutually singular on the observed data.
    #[error("posterior undefined: every parameter with prior mass has zero likelihood")]
    UndefinedPosterior,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant failure: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_) | Error::UndefinedPosterior => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
