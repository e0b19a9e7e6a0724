use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("unknown document {0:?}")]
    NotFound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A query or document could not be placed in the topic space.
    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("requested {requested} dimensions but the achievable rank is {achievable}")]
    RankExceeded { requested: usize, achievable: usize },

    #[error("vocabulary is empty after document-frequency filtering")]
    EmptyVocabulary,

    #[error("no document carries an in-vocabulary keyword")]
    NoKeywordedDocuments,

    #[error("corrupt index: {0}")]
    CorruptIndex(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
