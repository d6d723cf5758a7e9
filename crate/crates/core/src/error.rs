use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {lhs} is {lhs_shape}, {rhs} is {rhs_shape}")]
    Shape {
        lhs: &'static str,
        lhs_shape: String,
        rhs: &'static str,
        rhs_shape: String,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{source_name}: byte offset {offset}: {message}")]
    Format {
        source_name: String,
        offset: u64,
        message: String,
    },

    #[error("layer {index}: {message}")]
    LayerChain { index: usize, message: String },

    #[error("invalid head: {0}")]
    InvalidHead(String),

    #[error("class cap of {cap} reached, cannot add label {label:?}")]
    ClassCapExceeded { cap: usize, label: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("report validation failed: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        lhs: &'static str,
        lhs_shape: impl ToString,
        rhs: &'static str,
        rhs_shape: impl ToString,
    ) -> Self {
        Error::Shape {
            lhs,
            lhs_shape: lhs_shape.to_string(),
            rhs,
            rhs_shape: rhs_shape.to_string(),
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
