use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Seeding could not find enough distinct colors to place every palette entry.
    #[error("degenerate seeding: {0}")]
    DegenerateSeeding(String),

    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
