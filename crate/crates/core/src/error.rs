use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("feature vector has zero norm")]
    ZeroNorm,

    #[error("invalid {field}: {reason}")]
    InvalidValue { field: &'static str, reason: String },

    #[error("no proposals to score")]
    EmptyProposals,

    #[error("clip has no frames")]
    EmptyClip,

    #[error("frames are not strictly increasing at frame {0}")]
    UnsortedFrames(u64),

    #[error("signal is empty")]
    EmptySignal,

    #[error("no peak found")]
    NoPeak,

    #[error("peak frame {0} has no best proposal")]
    PeakWithoutProposal(u64),

    #[error("record {clip_id}/{query_id}: {reason}")]
    Record {
        clip_id: String,
        query_id: String,
        reason: String,
    },

    #[error("duplicate key ({0}, {1})")]
    DuplicateKey(String, String),

    #[error("prediction ({0}, {1}) has no matching annotation")]
    UnmatchedPrediction(String, String),

    #[error("{path}:{line}: malformed record")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    Pool(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
