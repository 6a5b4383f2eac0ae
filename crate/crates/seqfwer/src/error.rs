//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structurally invalid input (bad schedule, ladder, partition, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// Inconsistent or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A statistic was asked for more observations than a stream holds.
    #[error("stream {stream} exhausted: have {have} observations, need {need}")]
    DataExhausted {
        stream: usize,
        have: usize,
        need: usize,
    },

    /// A rejection or acceptance rule emitted an already-decided hypothesis.
    #[error("rule emitted already-decided hypothesis {element} at n = {n}")]
    ContractViolation { element: usize, n: usize },

    /// Too few Monte Carlo replicates to resolve the requested quantile.
    #[error("insufficient replicates: {0}")]
    Precision(String),

    /// Calibrated boundaries are incompatible (lower boundary at or above upper).
    #[error("infeasible calibration: {0}")]
    Infeasible(String),

    /// Data admits no test statistic (e.g. zero pooled variance).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Exact enumeration was requested for a space above the cap.
    #[error("outcome space of size {size} exceeds enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
