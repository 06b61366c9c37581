use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} out of range for image with {height} rows")]
    RowOutOfRange { row: usize, height: usize },

    #[error("invalid image dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("frame sequence is empty")]
    EmptySequence,

    #[error("burst has {available} frames but the readout model needs {required}")]
    TooFewFrames { required: usize, available: usize },

    #[error("invalid readout model: {0}")]
    InvalidModel(String),

    #[error("invalid frame rate {0}")]
    InvalidFrameRate(f64),

    #[error("unsupported image format for {path:?}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("corrupt image file {path:?}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid sequence directory {path:?}: {reason}")]
    InvalidSequence { path: PathBuf, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid generator config: {0}")]
    InvalidGenerator(String),

    #[error("track for actor {actor_id} has {len} boxes, readout model needs {required}")]
    TrackLength {
        actor_id: u32,
        len: usize,
        required: usize,
    },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("{path:?}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path:?} ({location}): field `{field}` malformed: {reason}")]
    MalformedField {
        path: PathBuf,
        /// `line N` for text formats, a JSON pointer-like path for JSON.
        location: String,
        field: String,
        reason: String,
    },

    #[error("{path:?}:{line}: normalized coordinate `{field}` = {value} outside [0, 1]")]
    CoordinateOutOfRange {
        path: PathBuf,
        line: usize,
        field: String,
        value: f64,
    },

    #[error("{path:?}: unknown image reference `{reference}`")]
    UnknownImage { path: PathBuf, reference: String },

    #[error("{path:?}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid metric config: {0}")]
    InvalidMetricConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
