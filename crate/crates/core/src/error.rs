//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while validating or transforming correlation matrices and
/// while running the expansion pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max |m - m^T| = {max_asymmetry:.3e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("diagonal entry ({index},{index}) is {value}, expected 1")]
    NotUnitDiagonal { index: usize, value: f64 },

    #[error("off-diagonal entry ({i},{j}) = {value} has magnitude >= 1")]
    OffDiagonalOutOfRange { i: usize, j: usize, value: f64 },

    #[error("matrix is not positive definite (min eigenvalue = {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension {n} is too small, need at least {min}")]
    DimensionTooSmall { n: usize, min: usize },

    #[error("dimension {n} is too large for this oracle, max {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue cutoff {cutoff} rejected: {reason}")]
    CutoffTooLarge { cutoff: f64, reason: String },

    #[error("no sign change on the bracketing interval [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("loading c[{index}] = {value} has magnitude >= 1")]
    LoadingOutOfRange { index: usize, value: f64 },

    #[error("one-factor matrix is not positive definite (min eigenvalue = {min_eigenvalue:.6e})")]
    RhoFNotPositiveDefinite { min_eigenvalue: f64 },

    #[error("principal-component weight vanishes on the diagonal at index {index}")]
    ZeroDiagonalWeight { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Cholesky factorization failed on a validated matrix")]
    CholeskyFailure,

    #[error("second-order class cardinalities sum to {got}, expected {expected}")]
    ClassCountMismatch { expected: u64, got: u64 },
}

/// Padé approximants signal defective (near-pole) configurations so callers
/// can fall back to plain partial sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PadeError {
    #[error("Pade denominator vanishes (defective approximant)")]
    Pole,
    #[error("extrapolation decay factor falls outside (0, 1)")]
    NoValidAlpha,
}
