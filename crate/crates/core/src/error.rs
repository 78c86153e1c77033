use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("state error: {0}")]
    State(String),

    #[error("non-finite value at epoch {epoch}, batch {batch}: {what}")]
    Numeric { epoch: usize, batch: usize, what: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable, machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Layout(_) => "layout",
            Error::Decode { .. } => "decode",
            Error::Format(_) | Error::UnsupportedVersion { .. } => "format",
            Error::State(_) => "state",
            Error::Numeric { .. } => "numeric",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
