use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("image too small: {0}")]
    Size(String),
    #[error("no frames matching `{pattern}` in {}", dir.display())]
    EmptySequence { dir: PathBuf, pattern: String },
    #[error("sequence too short: need at least {need} frames, got {got}")]
    SequenceLength { need: usize, got: usize },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: truncated payload, expected {expected} bytes, found {found}", path.display())]
    Length {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("restoration backend failed: {0}")]
    Backend(String),
    #[error("restoration backend broke its output contract: {0}")]
    Contract(String),
    #[error("cannot pair sequences: {0}")]
    Pairing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration rather than data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
