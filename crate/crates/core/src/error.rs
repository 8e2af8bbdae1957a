use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An internal consistency check failed (e.g. a log-concavity
    /// violation detected by the rejection sampler).
    #[error("integrity check failed: {0}")]
    Integrity(String),

    /// A numerical operation could not be completed (underflow of every
    /// forward message, singular posterior precision, ...).
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Input data is malformed (bad symbol index, shape mismatch, ...).
    #[error("bad input: {0}")]
    Input(String),

    /// Checkpoint version is not understood by this build.
    #[error("checkpoint schema version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Checkpoint payload does not match its checksum.
    #[error("checkpoint checksum mismatch: file is corrupt")]
    CheckpointChecksum,

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
