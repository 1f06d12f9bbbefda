use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max |A - A^T| = {asymmetry:e} exceeds tolerance {tolerance:e}")]
    NonSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("eigensolver backend failed: {0}")]
    BackendFailure(String),

    #[error("matrix is not positive definite{}", location_suffix(*.snp, *.trait_index))]
    NotPositiveDefinite {
        /// Grid row (SNP index) of the failing cell, when known.
        snp: Option<u64>,
        /// Grid column (trait index) of the failing cell, when known.
        trait_index: Option<u64>,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: bad magic {found:?}, expected \"GWG1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u16,
        expected: u16,
    },

    #[error("{path}: stream kind {found} does not match expected kind {expected}")]
    KindMismatch { path: PathBuf, found: u8, expected: u8 },

    #[error("{path}: truncated file, expected {expected} bytes but found {actual}")]
    TruncatedFile {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: stream is marked incomplete (a previous run failed or is still writing)")]
    IncompleteStream { path: PathBuf },

    #[error("{path}: I/O error at byte offset {offset}: {source}")]
    Io {
        path: PathBuf,
        offset: u64,
        #[source]
        source: io::Error,
    },

    #[error("insufficient disk space in {path}")]
    InsufficientDisk { path: PathBuf },

    #[error("timer resolution too coarse: {0}")]
    TimerResolution(String),

    #[error("memory budget of {budget} bytes cannot hold a minimal configuration ({required} bytes needed)")]
    InfeasibleBudget { budget: u64, required: u64 },

    #[error("pipeline stage terminated unexpectedly")]
    PipelineAborted,
}

fn location_suffix(snp: Option<u64>, trait_index: Option<u64>) -> String {
    match (snp, trait_index) {
        (Some(i), Some(j)) => format!(" at grid cell (snp {i}, trait {j})"),
        (None, Some(j)) => format!(" for trait {j}"),
        (Some(i), None) => format!(" for snp {i}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn not_spd() -> Self {
        Error::NotPositiveDefinite {
            snp: None,
            trait_index: None,
        }
    }

    /// Attaches grid coordinates to a `NotPositiveDefinite` error; other
    /// variants pass through unchanged.
    pub fn at_cell(self, snp: Option<u64>, trait_index: Option<u64>) -> Self {
        match self {
            Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { snp, trait_index },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, offset: u64, source: io::Error) -> Self {
        let path = path.into();
        // ENOSPC
        if source.raw_os_error() == Some(28) {
            return Error::InsufficientDisk { path };
        }
        Error::Io {
            path,
            offset,
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
