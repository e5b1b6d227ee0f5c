use std::path::PathBuf;

/// Errors raised across the library.
///
/// `Config` covers anything a user can fix by editing a config or the
/// arguments; everything else is a runtime abort.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("reward evaluation failed: {0}")]
    Reward(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("missing artifact: {0}")]
    Missing(PathBuf),
    #[error("io error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    /// True for errors a user fixes on the input side (bad config, bad flags,
    /// missing files they named).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Missing(_) | Error::Format { .. })
    }
}
