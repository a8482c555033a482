//! Estimation of eigenvalue counts for large sparse symmetric matrices.
//!
//! The estimators approximate the negative inertia of `A - tau I` (and from
//! it the count of eigenvalues in an interval) by combining Hutchinson-style
//! stochastic trace estimation with Gauss, generalized-averaged Gauss, or
//! Arnoldi quadrature built from a few preconditioned Krylov steps. Exact
//! oracles (dense inertia, analytic Laplacian spectrum) and a Chebyshev
//! filter baseline are included for validation.

pub mod dense;
pub mod error;
pub mod estimators;
pub mod krylov;
pub mod precond;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
