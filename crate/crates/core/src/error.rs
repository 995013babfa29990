use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A tensor contained NaN or infinity where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Configuration could not be parsed or is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A dataset directory is missing files or is otherwise malformed.
    #[error("invalid dataset at {root}: {reason}")]
    Dataset { root: PathBuf, reason: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    /// The training loss or its gradient became NaN or infinite.
    /// `last_good` is the state before the failing iteration.
    #[error("loss diverged at iteration {iteration}")]
    Diverged {
        iteration: u64,
        last_good: Box<crate::checkpoint::Checkpoint>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
