use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CclError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CclError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset row could not be parsed or validated. `row` is the 1-based
    /// line number in the file, header included.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("model document: {0}")]
    ModelFormat(String),

    #[error("unsupported model document version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    /// Sample `index` has no usable features (zero receptive-field activation,
    /// rank-0 feature matrix, ...).
    #[error("sample {index}: {message}")]
    DegenerateSample { index: usize, message: String },
}

impl CclError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CclError::Io {
            path: path.into(),
            source,
        }
    }
}
