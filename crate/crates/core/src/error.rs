use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("matrix of size {q} exceeds the limit of {limit} for this method")]
    CostGuard { q: usize, limit: usize },
    #[error("constraint cannot be satisfied by the incoming messages")]
    Contradiction,
    #[error("source exhausted after {0} bits")]
    SourceExhausted(usize),
    #[error("encoding failed after {0} attempts")]
    EncodingFailure(usize),
    #[error("codeword cannot be produced by the encoder: {0}")]
    Replay(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
