//! Cholesky QR, sketch-preconditioned Cholesky QR, and column-pivoted QR of
//! tall matrices via a pivoted QR of a sketch.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{chol, qr_econ, qrcp, rank_tol, solve_lower_transposed, LinalgError};
use crate::rng::RngKey;
use crate::sketching::{SketchError, SketchFamily, SketchOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FullRankError {
    #[error("Cholesky QR failed: Gram matrix is not numerically positive definite at pivot {pivot} (value {value:e})")]
    GramNotPositiveDefinite { pivot: usize, value: f64 },
    #[error("sketch has numerical rank {rank} < {n} columns; use sap_chol_qrcp for rank-deficient input")]
    SketchRankLoss { rank: usize, n: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// `A[:, pivots] = Q R`, with `Q` m×k and `R` k×n upper trapezoidal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PivotedQR {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub pivots: Vec<usize>,
    pub rank: usize,
    /// Number of times the rank was lowered after a Cholesky failure.
    pub retries: usize,
}

impl PivotedQR {
    /// `A[:, pivots]`.
    pub fn permuted(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, self.pivots[j])])
    }
}

/// `X R⁻¹` for upper-triangular `R`.
fn right_solve_upper(x: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    Ok(solve_lower_transposed(r, &x.transpose())?.transpose())
}

/// Cholesky QR: `R = chol(AᵀA)`, `Q = A R⁻¹`. Only stable for condition
/// numbers well below ε^(−1/2).
pub fn chol_qr(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), FullRankError> {
    let gram = a.tr_mul(a);
    let r = chol(&gram).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot, value } => FullRankError::GramNotPositiveDefinite { pivot, value },
        other => other.into(),
    })?;
    let q = right_solve_upper(a, &r)?;
    Ok((q, r))
}

fn sketch_of(a: &DMatrix<f64>, d: usize, seed: RngKey) -> Result<DMatrix<f64>, FullRankError> {
    let (m, n) = a.shape();
    if d < n || d > m {
        return Err(FullRankError::Invalid(format!("sketch size {d} must lie in {n}..={m}")));
    }
    let s = SketchFamily::default().sample_isotropic(d, m, seed)?;
    Ok(s.apply_left(a))
}

/// Default sketch size for a matrix with `n` columns.
pub fn default_sketch_rows(n: usize) -> usize {
    4 * n
}

/// Cholesky QR preconditioned by the R factor of a sketch `S A`.
pub fn rand_chol_qr(a: &DMatrix<f64>, d: usize, seed: RngKey) -> Result<(DMatrix<f64>, DMatrix<f64>), FullRankError> {
    let (m, n) = a.shape();
    let sa = sketch_of(a, d, seed)?;
    let r_sk = qr_econ(&sa).r;
    let tol = rank_tol(r_sk.diagonal().amax(), d, n);
    let rank = (0..n).filter(|&i| r_sk[(i, i)].abs() > tol).count();
    if rank < n {
        return Err(FullRankError::SketchRankLoss { rank, n });
    }
    let a_pre = right_solve_upper(a, &r_sk)?;
    let (q, r_pre) = chol_qr(&a_pre)?;
    debug_assert_eq!(q.nrows(), m);
    Ok((q, r_pre * r_sk))
}

/// Column-pivoted QR of a tall matrix, using the pivots and triangular
/// factor of a QRCP of `S A` as a preconditioner for Cholesky QR. Handles
/// rank deficiency: the returned `Q` has one column per detected rank.
pub fn sap_chol_qrcp(a: &DMatrix<f64>, d: usize, seed: RngKey) -> Result<PivotedQR, FullRankError> {
    let n = a.ncols();
    let sa = sketch_of(a, d, seed)?;
    let f = qrcp(&sa, None);
    let r_sk = f.r;
    let tol = rank_tol(r_sk[(0, 0)], d, n);
    let mut k = (0..n).take_while(|&i| r_sk[(i, i)] > tol).count();
    let mut retries = 0;
    let permuted = DMatrix::from_fn(a.nrows(), n, |i, j| a[(i, f.pivots[j])]);
    loop {
        if k == 0 {
            return Ok(PivotedQR {
                q: DMatrix::zeros(a.nrows(), 0),
                r: DMatrix::zeros(0, n),
                pivots: f.pivots,
                rank: 0,
                retries,
            });
        }
        let r11 = r_sk.view((0, 0), (k, k)).into_owned();
        let a_pre = right_solve_upper(&permuted.columns(0, k).into_owned(), &r11)?;
        match chol_qr(&a_pre) {
            Ok((q, r_pre)) => {
                let r = r_pre * r_sk.rows(0, k);
                return Ok(PivotedQR { q, r, pivots: f.pivots, rank: k, retries });
            }
            Err(FullRankError::GramNotPositiveDefinite { pivot, .. }) => {
                warn!("sap_chol_qrcp: Cholesky QR failed at pivot {pivot}; retrying with rank {pivot}");
                k = pivot;
                retries += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
