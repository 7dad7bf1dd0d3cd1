use std::io;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lower bound {a} must be below upper bound {b}")]
    InvalidRange { a: f64, b: f64 },

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("design is rank deficient: {0}")]
    RankDeficient(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("indices must differ, got {0} twice")]
    SameIndex(usize),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("residuals {i} and {j} coincide almost surely (H_ii = H_jj = H_ij + 1)")]
    TieDetected { i: usize, j: usize },

    #[error("degenerate denominator 2 - H_kk,i = {value:e} at k = {k}, i = {i}")]
    DegenerateDenominator { k: usize, i: usize, value: f64 },

    #[error("column space does not contain the constant vector (max |H1 - 1| = {0:e})")]
    InterceptMissing(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Validate a 1-based index and return it 0-based.
pub(crate) fn zero_based(index: usize, n: usize) -> Result<usize> {
    if index == 0 || index > n {
        Err(Error::IndexOutOfRange { index, n })
    } else {
        Ok(index - 1)
    }
}
