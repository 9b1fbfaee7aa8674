use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty corpus: at least one document is required")]
    EmptyCorpus,

    #[error("feature {feature:?} does not occur in the given text")]
    FeatureAbsent { feature: String },

    #[error("unknown session {0:?}")]
    UnknownSession(String),

    #[error("session {session:?} has no item {key:?}")]
    UnknownItem { session: String, key: String },

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error("session {0:?} is not completed")]
    IncompleteSession(String),

    #[error("session {0:?} already exists and holds decisions")]
    SessionExists(String),

    #[error("paper {0:?} appears in the system output but not in the gold standard")]
    CorpusMismatch(String),

    #[error("matching item {paper_id}/{mention} is not a detection true positive")]
    NotATruePositive { paper_id: String, mention: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
