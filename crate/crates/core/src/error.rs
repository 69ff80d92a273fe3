use std::io;

use thiserror::Error;

use crate::field::FieldStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("cannot ingest an empty sequence")]
    EmptySequence,

    #[error("sequence {0} not found")]
    NotFound(u64),

    #[error("malformed shard at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("field undefined at anchor ({0:?})")]
    FieldUndefined(FieldStatus),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("store holds no usable records")]
    StoreEmpty,

    #[error("every cluster member coincides with the centroid")]
    DegenerateCluster,

    #[error("no query sample has a defined field")]
    NoSupport,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable name, used by the CLI's JSON error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::EmptySequence => "empty_sequence",
            Error::NotFound(_) => "not_found",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::FieldUndefined(_) => "field_undefined",
            Error::Parameter(_) => "parameter",
            Error::StoreEmpty => "store_empty",
            Error::DegenerateCluster => "degenerate_cluster",
            Error::NoSupport => "no_support",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
