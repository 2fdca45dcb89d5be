//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Result`]. Variants carry enough context
//! to point at the offending row, column, or group without a debugger.

use crate::mc::PatchLogEntry;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} out of range at row {row}: {value}")]
    ValueOutOfRange {
        what: &'static str,
        row: usize,
        value: f64,
    },

    #[error("group {group:?} has no {side} mask")]
    MissingMask { group: String, side: &'static str },

    #[error("group {group:?} has no proxy error rate (declare err= or provide a true-membership column)")]
    MissingProxyError { group: String },

    #[error("reports cover different group sets: {detail}")]
    GroupSetMismatch { detail: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible construction: {0}")]
    Infeasible(String),

    #[error("round cap {cap} reached with calibration guard {guard:.6} still above alpha")]
    RoundCapExceeded {
        cap: usize,
        guard: f64,
        log: Vec<PatchLogEntry>,
    },

    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },

    #[error("row {row}, column {column:?}: {reason}")]
    BadCell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("labels are single-class; a baseline cannot be trained")]
    SingleClassLabels,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
