//! WFDB record ingestion for MIT-BIH style databases.
//!
//! Supports the three files that make up an arrhythmia database record:
//!
//! * `.hea` text headers ([`parse_header`]),
//! * `.dat` signal files in format 212 ([`decode_212`]),
//! * `.atr` binary annotation streams ([`parse_annotations`]).
//!
//! Only format 212 is accepted. The CSV fallback in [`csv`] lets the rest
//! of the pipeline run without database files.

mod annotation;
pub mod csv;
mod format212;
mod header;
mod record;
#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use annotation::{parse_annotations, symbol_for_code, Annotation};
pub use format212::{decode_212, decode_212_samples, SAMPLE_MAX, SAMPLE_MIN};
pub use header::{parse_header, RecordHeader, SignalSpec, DEFAULT_BASELINE, DEFAULT_GAIN};
pub use record::{adu_to_mv, load_record, load_record_from_base, Record};

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, WfdbError>;

#[derive(Debug, thiserror::Error)]
pub enum WfdbError {
    #[error("malformed header (line {line}): {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("unsupported signal format {0}; only format 212 is supported")]
    UnsupportedFormat(u32),
    #[error("truncated data at byte offset {offset}: {reason}")]
    TruncatedData { offset: usize, reason: String },
    #[error("unknown annotation code {code} at byte offset {offset}")]
    UnknownCode { code: u16, offset: usize },
    #[error("unknown annotation symbol {0:?}")]
    UnknownSymbol(String),
    #[error("record has no signal channel {0}")]
    ChannelMissing(usize),
    #[error("malformed CSV (line {line}): {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<WfdbError>,
    },
}

impl WfdbError {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (WfdbError::Io { .. } | WfdbError::InFile { .. }) => e,
            e => WfdbError::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| WfdbError::Io {
        path: path.to_path_buf(),
        source,
    })
}
