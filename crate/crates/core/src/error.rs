use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("malformed array header {path}: {message}")]
    Header { path: PathBuf, message: String },

    #[error("payload of {path} has {found} bytes, header implies {expected}")]
    PayloadLength {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: String,
        row: usize,
        col: usize,
    },

    #[error("unknown manifest schema_version {0} (supported: 1)")]
    UnknownSchemaVersion(u32),

    #[error("k = {k} out of range (need 1 <= k <= {max})")]
    KOutOfRange { k: usize, max: usize },

    #[error("point index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("dataset is locked by another precompute ({0})")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short stable tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingFile(_) => "missing_file",
            Error::Json { .. } => "json",
            Error::Csv { .. } => "csv",
            Error::Header { .. } => "header",
            Error::PayloadLength { .. } => "payload_length",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownSchemaVersion(_) => "unknown_schema_version",
            Error::KOutOfRange { .. } => "k_out_of_range",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidInput(_) => "invalid_input",
            Error::Locked(_) => "locked",
        }
    }
}
