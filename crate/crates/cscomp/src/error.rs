//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by generators, solvers, training and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// Matrix shapes are inconsistent with each other.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input is degenerate for the requested operation (e.g. zero matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An iterative solver produced non-finite values.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Training diverged; carries the layer stage and batch index.
    #[error("training diverged at layer stage {stage}, batch {batch}: {detail}")]
    Diverged {
        stage: usize,
        batch: usize,
        detail: String,
    },

    /// A file did not conform to the CMPX/LMP1 format.
    #[error("format error: {0}")]
    Format(String),

    /// An experiment configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
