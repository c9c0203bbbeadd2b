use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the link: ingestion, coding, framing and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported/corrupt format: {0}")]
    Format(String),
    #[error("image dimensions must be positive (got {channels}x{height}x{width})")]
    EmptyImage {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("image of {height}x{width} is not divisible into {patch}x{patch} patches")]
    NotDivisible { height: usize, width: usize, patch: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("payload of {len} bits does not fit a grid of {capacity} patches")]
    PayloadTooLong { len: usize, capacity: usize },
    #[error("index {index} out of range for {n} patches")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate index {0}")]
    DuplicateIndex(usize),
    #[error("side information truncated: {available} bits, header needs {needed}")]
    Truncated { needed: usize, available: usize },
    #[error("index count {count} exceeds {n} patches")]
    CountOverflow { count: usize, n: usize },
    #[error("no visible patches left to encode")]
    NoVisiblePatches,
    #[error("invalid codec parameter: {0}")]
    Codec(String),
    #[error("invalid channel parameter: {0}")]
    Channel(String),
    #[error("all-zero symbol stream cannot be power normalized")]
    ZeroPower,
    #[error("frame lost: {0}")]
    FrameLost(String),
    #[error("remote codec: {0}")]
    Remote(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
