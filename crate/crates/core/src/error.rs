//! Crate-wide error type.
//!
//! The variants are grouped by how the CLI reports them: configuration
//! problems, file problems, and the numeric/degenerate conditions raised by
//! the math modules. [`Error::exit_code`] gives the process exit code used
//! by the `trapnet` binary.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate similarity: {0}")]
    DegenerateSimilarity(String),

    #[error("degenerate signature: {0}")]
    DegenerateSignature(String),

    #[error("degenerate direction: detection gradient is the zero vector")]
    DegenerateDirection,

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("signature isolation violated: {0}")]
    Isolation(String),

    #[error("hash mismatch for {what}: expected {expected}, found {actual}")]
    HashMismatch {
        what: String,
        expected: String,
        actual: String,
    },
}

impl Error {
    /// Exit code the CLI maps this error to.
    ///
    /// 2 config, 3 i/o or malformed file, 4 training divergence,
    /// 5 signature-isolation violation, 6 artifact hash mismatch,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Training { .. } => 4,
            Error::Isolation(_) => 5,
            Error::HashMismatch { .. } => 6,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
