//! Error type shared by all modules.

use std::io;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed on-disk data: bad container header, unparseable CSV, bad sidecar.
    #[error("format error: {0}")]
    Format(String),

    /// A value failed the finiteness invariant, with its location.
    #[error("validation error: non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    /// Dimension or length mismatch.
    #[error("size error: {0}")]
    Shape(String),

    /// Invalid configuration: scheme parameters, divisibility, degenerate dims.
    #[error("configuration error: {0}")]
    Config(String),

    /// The reference product X·W has zero norm but the quantized product does not.
    #[error("degenerate baseline: reference product has zero norm but quantized product differs")]
    DegenerateBaseline,

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
