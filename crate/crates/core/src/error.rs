//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EeiError {
    #[error("{what} is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("{what} is not positive semidefinite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { what: String, min_eig: f64 },

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mu must exceed 1 (got {0})")]
    BadMu(f64),

    #[error("domination check failed: F(x*) = {star:.12e} < F(x) = {base:.12e}")]
    DominationFailed { star: f64, base: f64 },

    #[error("no admissible noise split: {0}")]
    SplitInfeasible(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("threshold {threshold} unreachable: posterior trace saturates at {limit}")]
    ThresholdUnreachable { threshold: f64, limit: f64 },

    #[error("separation failed: receiver-1 trace {rx1} exceeds threshold {threshold}")]
    SeparationFailed { rx1: f64, threshold: f64 },

    #[error("density not normalized: integral {0}")]
    UnnormalizedDensity(f64),

    #[error("grid too coarse: spacing {spacing} exceeds sigma/4 = {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("inconsistent density: {0}")]
    InconsistentDensity(String),

    #[error("infeasible input: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, EeiError>;
