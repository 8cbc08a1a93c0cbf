use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A query fell outside the tabulated range; `nearest` is the closest
    /// representable value.
    #[error("value {requested} outside representable range, nearest endpoint {nearest}")]
    Range { requested: f64, nearest: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {usable} usable samples, need at least {required}; {summary}")]
    InsufficientData {
        usable: usize,
        required: usize,
        summary: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Protocol state is missing or out of order.
    #[error("protocol state error: {0}")]
    State(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
