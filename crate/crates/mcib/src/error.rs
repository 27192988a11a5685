//! Error taxonomy shared across the workspace.
//!
//! The CLI maps these onto process exit codes: configuration and usage
//! errors exit with 2, data errors with 3, training divergence with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, infeasible knob combinations,
    /// unknown variants. Names the offending field where possible.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller misuse of an API contract (e.g. non-scalar loss, empty input).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or inconsistent input data; names the record where possible.
    #[error("data error: {0}")]
    Data(String),

    /// Tensor shape mismatch, naming the primitive and the offending dims.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A loss term became non-finite during training. `context` carries the
    /// epoch/batch position when the trainer raised it.
    #[error("training diverged: {term} is non-finite{context}")]
    Divergence { term: String, context: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Shape { .. } => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Divergence { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
