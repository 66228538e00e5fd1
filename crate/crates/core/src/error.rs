use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("row {row}: value {value} is not positive")]
    NonPositiveValue { row: usize, value: f64 },

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("insufficient overlap: {common} common dates, need at least 3")]
    InsufficientOverlap { common: usize },

    #[error("zero-variance input: {0}")]
    ZeroVariance(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate segment {segment} at scale {scale}: zero fluctuation with q = {q}")]
    DegenerateSegment { scale: usize, segment: usize, q: f64 },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("circulant embedding failed: minimum eigenvalue {min_eigenvalue:e}")]
    EmbeddingFailed { min_eigenvalue: f64 },

    #[error("figure `{0}` unavailable: the stage producing it did not run")]
    FigureUnavailable(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
