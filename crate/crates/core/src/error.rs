use std::io;

use thiserror::Error;

use crate::evidence::EvidenceError;
use crate::memory::MemoryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: malformed files, violated invariants, out-of-domain parameters.
    Validation,
    /// Filesystem or network failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate entry for query {query}, document {doc}")]
    Duplicate { query: String, doc: String },

    #[error("invalid identifier {0:?}: must be non-empty and contain no whitespace")]
    InvalidId(String),

    #[error("{0}")]
    Domain(String),

    #[error("no ranked list for sub-query {0}")]
    MissingSubQuery(String),

    #[error("query {0} has no relevance judgments")]
    UnjudgedQuery(String),

    #[error("metric keys differ between reports: {0}")]
    MetricMismatch(String),

    #[error(transparent)]
    Evidence(#[from] EvidenceError),

    #[error(transparent)]
    Memory(#[from] MemoryError),

    #[error("{stage} stage failed{}: {source}", query.as_ref().map(|q| format!(" for query {q}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        query: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) | Error::Transport(_) => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Wraps the error with the pipeline stage (and query) it came from.
    pub fn in_stage(self, stage: &'static str, query: Option<&str>) -> Self {
        Error::Stage {
            stage,
            query: query.map(str::to_owned),
            source: Box::new(self),
        }
    }
}
