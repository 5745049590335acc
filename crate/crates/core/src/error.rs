use std::io;

use thiserror::Error;

/// Errors raised by model construction, evaluation, file ingestion and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance: {0}")]
    Malformed(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("constraint unsatisfiable at mean-field level: {0}")]
    Unsatisfiable(String),

    #[error("empty input")]
    Empty,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
