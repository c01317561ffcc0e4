use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants map 1:1 onto CLI exit codes
/// (see `src/bin/kvtc.rs`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("row {row} has zero norm")]
    DegenerateRow { row: usize },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("checksum mismatch in {section}")]
    ChecksumMismatch { section: &'static str },
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptPayload(msg.into())
    }

    pub fn truncated(msg: impl Into<String>) -> Self {
        Error::TruncatedFile(msg.into())
    }
}
