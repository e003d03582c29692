use thiserror::Error;

use crate::state::TokenId;

pub type Result<T, E = SpiffyError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpiffyError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid sequence state: {0}")]
    InvalidState(String),

    #[error("nothing to denoise: active block {0} is fully unmasked")]
    NothingToDenoise(usize),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("token id {token} out of range 1..={vocab}")]
    TokenOutOfRange { token: TokenId, vocab: usize },

    #[error("invalid draft formula: {0}")]
    InvalidFormula(String),

    #[error("invalid draft graph: {0}")]
    InvalidGraph(String),

    #[error("draft length {got} does not match block length {expected}")]
    DraftLength { got: usize, expected: usize },

    #[error("{drafts} drafts but {marginals} draft marginals")]
    MisalignedDrafts { drafts: usize, marginals: usize },

    #[error("no level-1 candidates")]
    NoLevelOneCandidates,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SpiffyError {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        SpiffyError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
