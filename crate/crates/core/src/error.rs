//! Error type shared by all modules.

/// Crate-wide error. The CLI maps these onto process exit codes, so the
/// variants distinguish "the request was wrong" from "a file was wrong" from
/// "a numeric procedure failed".
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or configuration (bad dimensions, out-of-range
    /// bit widths, malformed config documents).
    #[error("configuration error: {0}")]
    Config(String),

    /// A documented precondition of an operation was violated by the caller
    /// (e.g. a steering matrix that fails its own invariants).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative training procedure failed (diverged, or the data cannot
    /// support the requested model).
    #[error("training error: {0}")]
    Training(String),

    /// A persisted artifact is corrupt or has an unsupported layout. The
    /// offset points at the first byte that failed validation.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// A required artifact file does not exist.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    pub fn missing_artifact(msg: impl Into<String>) -> Self {
        Error::MissingArtifact(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
