//! H2-optimal interpolatory model reduction for SISO LTI systems.
//!
//! The centerpiece is a rational Krylov fixed-point iteration that Hermite-
//! interpolates the full transfer function at mirrored reduced poles. The
//! reduction bases are kept *primitive* (unorthogonalized shifted solves),
//! which makes the reduced state matrix a rank-one update of the diagonal of
//! shifts. That structure drives everything else in the crate: explicit pole
//! placement formulas for shift updates, a secular determinant identity,
//! analytic eigenvectors through a Cauchy matrix, and per-iteration backward
//! error certificates that justify stopping.
//!
//! Modules:
//! - [`linalg`]: dense kernels (shifted solves, eigen/SVD, Lyapunov).
//! - [`lti`]: state-space systems, transfer functions, H2 norms.
//! - [`shifts`]: conjugation-closed point sets and the matching/Hausdorff
//!   metrics that measure convergence.
//! - [`interpolation`]: primitive bases, Loewner matrices, the generalized
//!   companion form and its spectral structure.
//! - [`irka`]: the fixed-point driver, pole-placement-blended updates.
//! - [`diagnostics`]: perturbation bounds and backward-stability certificates.
//! - [`io`]: Matrix Market ingestion, run reports, history CSV.

pub mod diagnostics;
pub mod error;
pub mod interpolation;
pub mod io;
pub mod irka;
pub mod linalg;
pub mod lti;
pub mod shifts;

pub use error::{Error, Result};
