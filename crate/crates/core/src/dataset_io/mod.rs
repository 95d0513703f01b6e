//! Canonical `.nfsl` sample files, CSV export and leave-one-subject-out
//! split bookkeeping.

pub(crate) mod bytes;
mod csv;
mod format;
mod split;

pub use self::csv::export_csv;
pub use format::{
    dataset_hash, decode_dataset, encode_dataset, read_dataset, write_dataset, FORMAT_VERSION,
    MAGIC,
};
pub use split::{make_split, SplitManifest, SplitSpec};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a sample file: expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: Vec<u8> },
    #[error("record {record} at byte {offset}: unsupported version {found}")]
    Version {
        record: usize,
        offset: usize,
        found: u16,
    },
    #[error("record {record} truncated at byte {offset}: need {needed} bytes, {available} left")]
    Truncated {
        record: usize,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("record {record} at byte {offset}: timestamp of packet {packet} does not increase")]
    NonMonotone {
        record: usize,
        offset: usize,
        packet: usize,
    },
    #[error("record {record} at byte {offset}: {reason}")]
    Malformed {
        record: usize,
        offset: usize,
        reason: String,
    },
    #[error("cannot encode sample {index}: {reason}")]
    Encode { index: usize, reason: String },
    #[error("split: {0}")]
    Split(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
