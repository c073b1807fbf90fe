use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
///
/// Variants split into I/O failures ([`Error::Io`]) and contract violations
/// (everything else); the CLI maps them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {file}: {message}")]
    Parse { file: PathBuf, message: String },
    #[error("integrity error for {what}: {message}")]
    Integrity { what: String, message: String },
    #[error("unsupported camera model `{0}` (only PINHOLE and SIMPLE_PINHOLE)")]
    UnsupportedCamera(String),
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("pixel ({0}, {1}) is outside the image")]
    OutOfBounds(f64, f64),
    #[error("format error: {0}")]
    Format(String),
    #[error("frame {0} is missing from the feature store")]
    MissingFrame(u64),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument `{field}`: {message}")]
    InvalidArgument { field: String, message: String },
    #[error("feature head {head} has near-zero norm")]
    DegenerateFeature { head: usize },
    #[error("vertex {0} has no positive edge weight")]
    DisconnectedVertex(usize),
    #[error("partition must have two non-empty classes")]
    InvalidPartition,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("no ground plane found: {0}")]
    NoPlaneFound(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            message: message.into(),
        }
    }

    pub fn integrity(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Integrity {
            what: what.into(),
            message: message.into(),
        }
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the file system rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
