//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a shape or range precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A serialized model, image, or dataset file could not be parsed.
    /// Carries the name of the offending field or section.
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    /// Training finished without reaching the required accuracy.
    #[error("training failed: reached {accuracy:.2}% train accuracy, required {required:.2}%")]
    TrainingFailed { accuracy: f64, required: f64 },

    /// A computation produced a non-finite value where one is not allowed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for bad inputs, 2 for internal
    /// numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
