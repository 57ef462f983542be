use thiserror::Error;

use crate::dist::DivergenceKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Hellinger has an exact d-dimensional map and no spectral density.
    #[error("{0} has no spectral kernel")]
    UnsupportedKernel(DivergenceKind),

    #[error("config: {0}")]
    Config(String),

    #[error("convergence: {0}")]
    Convergence(String),

    /// The aggregate stream model delivers each coordinate exactly once;
    /// a repeat would corrupt the linear sketch irreparably.
    #[error("duplicate coordinate {coord} for point {point}")]
    DuplicateCoordinate { point: String, coord: usize },

    #[error("sketch mismatch: {0}")]
    SketchMismatch(String),

    #[error("incompatible embeddings: {0}")]
    Incompatible(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}
