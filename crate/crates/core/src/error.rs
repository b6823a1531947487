//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by distribution, strategy, model, world, and report code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate support: candidate set carries zero probability mass")]
    DegenerateSupport,

    #[error("missing table entry for prefix {prefix:?} (instance {instance})")]
    MissingEntry { instance: String, prefix: Vec<u32> },

    #[error("enumeration too large: {leaves} leaves exceed the {limit} guard")]
    EnumerationTooLarge { leaves: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Remote(#[from] crate::remote::RemoteError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
