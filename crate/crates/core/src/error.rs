use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate call_id `{call_id}` at lines {first_line} and {second_line}")]
    DuplicateCall { call_id: String, first_line: usize, second_line: usize },

    #[error("unknown sector label `{0}`")]
    UnknownSector(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entity tagger `{tagger}` failed at offset {offset}: {message}")]
    Tagger { tagger: String, offset: usize, message: String },

    #[error("backend `{backend}` failed for call `{call_id}` chunk {chunk_index} question {question}: {message}")]
    Backend { backend: String, call_id: String, chunk_index: usize, question: String, message: String },

    #[error("nonpositive level {value} at period {period}")]
    NonPositiveLevel { period: String, value: f64 },

    #[error("insufficient overlap: column `{column}` covers {available} usable periods, need {required}")]
    InsufficientOverlap { column: String, available: usize, required: usize },

    #[error("missing value: {0}")]
    Missing(String),

    #[error("design matrix is rank deficient; dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("insufficient observations: have {have}, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("residual covariance is not positive definite; drop a variable or add a ridge term")]
    SingularCovariance,

    #[error("{0}")]
    Numerical(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
