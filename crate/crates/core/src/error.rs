use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("disease name is empty after normalization")]
    EmptyName,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateRecordId(String),

    #[error("invalid record `{record_id}`: {reason}")]
    InvalidRecord { record_id: String, reason: String },

    #[error("malformed ICD code `{0}`")]
    BadCode(String),

    #[error("duplicate ICD code `{0}`")]
    DuplicateCode(String),

    #[error("unknown ICD code `{0}`")]
    UnknownCode(String),

    #[error("lexicon is empty")]
    EmptyLexicon,

    #[error("disease surface of {len} chars does not fit a context of {max} chars")]
    WindowOverflow { len: usize, max: usize },

    #[error("bad enumerator pattern `{pattern}`: {message}")]
    BadPattern { pattern: String, message: String },

    #[error("context is empty")]
    EmptyContext,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("replacement pool is empty after exclusions")]
    EmptyPool,

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("insufficient ICD codes: {0}")]
    InsufficientCodes(String),

    #[error("model not loaded: {0}")]
    ModelNotLoaded(&'static str),

    #[error("no group row for ({adrg}, tier {tier})")]
    MissingGroupRow { adrg: String, tier: u8 },

    #[error("bad template `{template}`: {reason}")]
    BadTemplate { template: String, reason: String },

    #[error("bad model file: {0}")]
    BadModelFile(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}
