//! File formats for the frequency stability engine: fleet snapshots,
//! fault-recorder traces, the unit parameter store and the results store.

pub mod params;
pub mod results;
pub mod snapshot;
pub mod trace;

use std::io;
use std::path::Path;

use rtfs_core::fleet::TraceError;
use rtfs_core::ValidationReport;
use thiserror::Error;

pub use params::{UnitParameterStore, UnitParameters};
pub use results::ResultsStore;
pub use snapshot::{
    parse_document, parse_snapshot, write_document, write_snapshot, Extras, ParseMode, SnapshotDocument,
    SNAPSHOT_SCHEMA_VERSION,
};
pub use trace::{parse_trace_file, Channel, TraceFile, TraceHeader};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}line {line}, column {column}: {message}", path.as_ref().map(|p| format!("{p}: ")).unwrap_or_default())]
    Parse {
        path: Option<String>,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown field `{path}`")]
    UnknownField { path: String },
    #[error("document has no schema_version")]
    MissingSchemaVersion,
    #[error("unsupported schema_version {0}")]
    UnsupportedSchema(String),
    #[error("invalid snapshot: {0}")]
    Invalid(#[from] ValidationReport),
    #[error("trace header, line {line}: {message}")]
    TraceHeader { line: usize, message: String },
    #[error("trace line {line}: {message}")]
    TraceRow { line: usize, message: String },
    #[error("trace line {line}: duplicate timestamp {time}")]
    DuplicateTimestamp { line: usize, time: f64 },
    #[error("trace line {line}: timestamp {time} goes backwards")]
    NonMonotonicTime { line: usize, time: f64 },
    #[error("timestamp jitter {max_seconds} s exceeds {limit_seconds} s")]
    Jitter { max_seconds: f64, limit_seconds: f64 },
    #[error("declared sample rate {declared_hz} Hz but data runs at {observed_hz} Hz")]
    SampleRateMismatch { declared_hz: f64, observed_hz: f64 },
    #[error("missing channel `{0}`")]
    MissingChannel(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("results store: {0}")]
    Store(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
