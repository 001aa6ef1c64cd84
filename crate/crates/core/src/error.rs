use thiserror::Error;

use crate::corpus::CorpusError;
use crate::numerics::NumericsError;
use crate::prompts::PromptError;
use crate::providers::ProviderError;
use crate::retrieval::RetrievalError;
use crate::stats::StatsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Pipelines (Turing test, DKPS, flip scores, topics)
/// return this; the leaf modules have their own error enums.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Provider,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Provider(_) => ErrorKind::Provider,
            _ => ErrorKind::Data,
        }
    }
}
