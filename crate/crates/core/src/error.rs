use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("transforms {first} and {second} do not commute (max deviation {deviation:e})")]
    Commutativity {
        first: usize,
        second: usize,
        deviation: f64,
    },

    #[error("kernel is not invariant to the transform (max deviation {deviation:e})")]
    Invariance { deviation: f64 },

    #[error("index {index:?} out of range for periods {periods:?}")]
    IndexOutOfRange {
        index: Vec<usize>,
        periods: Vec<usize>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cholesky failed for inducing group {group}: {reason}")]
    GroupCholesky { group: usize, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("training failed at iteration {iteration}: {reason}")]
    Training {
        iteration: usize,
        reason: String,
        /// Packed parameters of the last model state that evaluated cleanly.
        last_good: Vec<f64>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
