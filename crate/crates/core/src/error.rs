use std::path::PathBuf;

/// Errors raised across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("projection domain error: {0}")]
    Projection(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("fusion error: {0}")]
    Fusion(String),
    #[error("reprojection gate undefined: no keypoint passed its confidence threshold")]
    GateUndefined,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("validation error in {path}, line {line}: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("schema version {found} in {path} is not supported (expected {expected}); regenerate the file with this release")]
    SchemaVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Process exit status for an error, as used by the command-line driver.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const IO: i32 = 4;
    pub const NUMERICAL: i32 = 5;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => exit::USAGE,
            Error::Configuration(_)
            | Error::Validation { .. }
            | Error::Malformed { .. }
            | Error::SchemaVersion { .. } => exit::VALIDATION,
            Error::Io { .. } => exit::IO,
            Error::Projection(_)
            | Error::Alignment(_)
            | Error::Fusion(_)
            | Error::GateUndefined
            | Error::DegenerateInput(_)
            | Error::Numerical(_) => exit::NUMERICAL,
        }
    }
}
