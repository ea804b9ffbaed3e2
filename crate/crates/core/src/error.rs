//! Error type shared by every module in the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Errors surfaced by the reduction pipeline.
///
/// Numerical failures are reported with enough context to tell *which*
/// quantity broke down; callers that iterate (the fixed-point driver)
/// convert these into run statuses instead of propagating panics.
#[derive(Debug, Error)]
pub enum Error {
    /// A shifted system (sigma*I - A) could not be factored; sigma is
    /// numerically an eigenvalue of A.
    #[error("shift {shift} is numerically an eigenvalue: factorization of (sigma*I - A) broke down")]
    SingularShift { shift: Complex64 },

    /// The dense eigensolver did not converge.
    #[error("eigensolver failed to converge (lapack info = {info})")]
    NoConvergence { info: i32 },

    /// A matrix required to be stable (spectrum in the open left half-plane) is not.
    #[error("matrix is not stable: max eigenvalue real part = {max_re}")]
    UnstableMatrix { max_re: f64 },

    /// An input matrix lost column rank numerically.
    #[error("matrix is numerically rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },

    /// The Loewner matrix W^T V is numerically singular; the basis collapsed.
    #[error("basis collapse: cond2(W^T V) = {cond:e} exceeds the usable range")]
    RankCollapse { cond: f64 },

    /// Two collections that must have equal length do not.
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    /// An operation on point sets received an empty set.
    #[error("empty point set")]
    EmptySet,

    /// Two shifts coincide, so divided differences / nodal derivatives blow up.
    #[error("shift collision: |sigma_{i} - sigma_{j}| below separation tolerance")]
    ShiftCollision { i: usize, j: usize },

    /// A shift collides with a reduced pole, so a Cauchy entry 1/(sigma_i - mu_j) blows up.
    #[error("shift/eigenvalue collision: |sigma_{i} - mu_{j}| below separation tolerance")]
    ShiftEigCollision { i: usize, j: usize },

    /// An evaluation point coincides with a pole of the function being evaluated.
    #[error("evaluation point {point} hits a pole")]
    PoleHit { point: Complex64 },

    /// A denominator sigma_i + sigma_k or sigma_i - mu_k in the certificate
    /// products is too small to divide by.
    #[error("denominator collapse in certificate products at (i, k) = ({i}, {k})")]
    DenominatorCollapse { i: usize, k: usize },

    /// The relative eigenvalue perturbation bound needs nonzero eigenvalues.
    #[error("eigenvalue {index} is numerically zero; relative bound undefined")]
    ZeroEigenvalue { index: usize },

    /// The backward certificate gate eps_bullet < 1/2 is violated.
    #[error("certificate invalid: eps_bullet = {eps_bullet} >= 1/2")]
    CertificateInvalid { eps_bullet: f64 },

    /// State-space dimensions are inconsistent.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A matrix file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    /// A Matrix Market field/symmetry combination outside the supported subset.
    #[error("unsupported matrix market field: {found}")]
    UnsupportedField { found: String },

    /// An invalid spectrum descriptor was given to the synthesizer.
    #[error("bad spectrum descriptor: {reason}")]
    BadSpec { reason: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// An unexpected failure in a backing LAPACK routine.
    #[error("internal numerical failure in {routine} (info = {info})")]
    Internal { routine: &'static str, info: i32 },
}

pub type Result<T> = std::result::Result<T, Error>;
