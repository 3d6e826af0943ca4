use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("zero valid rows in {0}")]
    ZeroValidRows(PathBuf),

    #[error("item {0} has no genre")]
    ItemWithoutGenre(String),

    #[error("result empty after filtering")]
    EmptyResult,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("requested rank {requested} exceeds bound {bound}")]
    RankTooLarge { requested: usize, bound: usize },

    #[error("not enough candidates: need {needed}, have {available}")]
    NotEnoughCandidates { needed: usize, available: usize },

    #[error("numeric corruption: {0}")]
    Numeric(String),

    #[error("position {position} lies below click at {click}")]
    UnobservedPosition { position: usize, click: usize },

    #[error("user {0} has no ground-truth preference")]
    UnknownUser(usize),

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
