//! Deterministic building blocks.
//!
//! Dense factorizations go through [`dense`], the one module that talks to
//! the host linear-algebra backend (nalgebra). Iterative solvers in
//! [`iterative`] only see matrices through [`LinearOperator`].

pub mod dense;
pub mod iterative;
pub mod operator;

use thiserror::Error;

pub use dense::{
    chol, eigh, inverse_upper, numerical_rank, orth, pinv, pinv_solve, qr_econ, qrcp, rank_tol, solve_lower_transposed,
    solve_upper, svd, QrFactors, QrcpFactors, SvdFactors,
};
pub use iterative::{lanczos_tridiag, lsqr, lsqr_scaled, pcg, IterativeReport, LanczosResult, Reorth};
pub use operator::{
    check_adjoint, AdjointOperator, CountingOperator, FnOperator, IdentityOperator, LinearOperator, ProductOperator,
    ScaledOperator,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite: Cholesky pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("triangular factor is singular at diagonal entry {index}")]
    Singular { index: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("negative curvature {value:e} at iteration {iteration}: operator is not positive semidefinite")]
    NegativeCurvature { iteration: usize, value: f64 },
    #[error("preconditioner is not positive definite at iteration {iteration}")]
    IndefinitePreconditioner { iteration: usize },
    #[error("starting vector must have unit norm, got {norm}")]
    StartVector { norm: f64 },
}
