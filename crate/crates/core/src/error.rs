use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
///
/// The CLI maps these onto exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing {what} for camera `{camera}` at time {time}: {path}")]
    MissingFrame {
        what: &'static str,
        camera: String,
        time: usize,
        path: PathBuf,
    },

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic { path: PathBuf, expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported {what} version {found} in {path} (supported: {supported})")]
    UnsupportedVersion {
        what: &'static str,
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("payload length mismatch in {path}: expected {expected} bytes, found {found}")]
    PayloadLength { path: PathBuf, expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("checkpoint config conflict on `{field}`: file has {file}, requested {requested}")]
    ConfigConflict { field: &'static str, file: String, requested: String },

    #[error("non-finite value in parameter group `{group}` at cycle {cycle}, epoch {epoch}")]
    NumericalAbort { group: String, cycle: usize, epoch: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::ConfigConflict { .. } => 1,
            Error::NumericalAbort { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
