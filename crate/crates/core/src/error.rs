use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("non-finite loss{}", match .batch { Some(b) => format!(" at batch {b}"), None => String::new() })]
    NonFiniteLoss { batch: Option<usize> },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("non-numeric cell {value:?} at line {line}, column {column}")]
    NonNumericCell {
        line: usize,
        column: usize,
        value: String,
    },

    #[error("split `{split}` has no usable windows (length {len}, lookback {lookback}, horizon {horizon})")]
    EmptySplit {
        split: String,
        len: usize,
        lookback: usize,
        horizon: usize,
    },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("checkpoint does not match the requested model: {0}")]
    ConfigMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a failure
    /// during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::MissingFile(_)
                | Error::Parse { .. }
                | Error::NonNumericCell { .. }
                | Error::Config(_)
                | Error::ConfigMismatch(_)
                | Error::UnsupportedVersion(_)
                | Error::CorruptCheckpoint(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
