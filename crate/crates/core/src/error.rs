use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by bit-range primitives on messages.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("field [{bit_start}, {bit_start}+{bit_len}) exceeds message of {msg_bits} bits")]
    OutOfRange {
        bit_start: usize,
        bit_len: usize,
        msg_bits: usize,
    },
    #[error("value has {got} bits, field expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Failures while reading or writing corpus and grammar files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected \"APFZ\"")]
    BadMagic,
    #[error("unsupported corpus version {0:#04x}")]
    VersionMismatch(u8),
    #[error("corpus truncated at byte offset {0}")]
    Truncated(usize),
    #[error("trailing garbage after corpus at byte offset {0}")]
    TrailingBytes(usize),
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),
    #[error("invalid stats file: {0}")]
    InvalidStats(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}
