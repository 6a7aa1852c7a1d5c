use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_rank, tsog1, LowRankError, PowerConfig};
use crate::detkernels::{pinv, qrcp, rank_tol, solve_upper, svd, AdjointOperator, LinearOperator};
use crate::rng::RngKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// `A ≈ Z A[I, :]`.
    Row,
    /// `A ≈ A[:, J] X`.
    Column,
}

/// One-sided interpolative decomposition. For a column ID `m` is k×n and
/// `m[:, skeleton] = I`; for a row ID it is m×k and `m[skeleton, :] = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneSidedID {
    pub m: DMatrix<f64>,
    pub skeleton: Vec<usize>,
    pub axis: Axis,
}

impl OneSidedID {
    pub fn rank(&self) -> usize {
        self.skeleton.len()
    }

    /// ‖M‖₂, which controls how much the ID can amplify approximation error.
    pub fn interp_norm(&self) -> f64 {
        svd(&self.m).sigma.get(0).copied().unwrap_or(0.0)
    }

    /// The approximation of `a` implied by this ID.
    pub fn reconstruct(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self.axis {
            Axis::Column => select_columns(a, &self.skeleton) * &self.m,
            Axis::Row => &self.m * select_rows(a, &self.skeleton),
        }
    }
}

pub fn select_columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

pub fn select_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Deterministic one-sided ID of a (small) matrix via QRCP.
pub fn osid_qrcp(y: &DMatrix<f64>, k: usize, axis: Axis) -> Result<OneSidedID, LowRankError> {
    match axis {
        Axis::Column => column_id(y, k),
        Axis::Row => {
            let id = column_id(&y.transpose(), k)?;
            Ok(OneSidedID { m: id.m.transpose(), skeleton: id.skeleton, axis: Axis::Row })
        }
    }
}

fn column_id(y: &DMatrix<f64>, k: usize) -> Result<OneSidedID, LowRankError> {
    let (m, n) = y.shape();
    check_rank(k, m, n, "ID rank")?;
    let f = qrcp(y, Some(k));
    let tol = rank_tol(f.r[(0, 0)], m, n);
    let rank = (0..k).take_while(|&i| f.r[(i, i)] > tol && f.r[(i, i)] > 0.0).count();
    if rank < k {
        warn!("osid_qrcp: leading triangle is numerically singular; reducing rank from {k} to {rank}");
    }
    let r11 = f.r.view((0, 0), (rank, rank)).into_owned();
    let r12 = f.r.view((0, rank), (rank, n - rank)).into_owned();
    let t = solve_upper(&r11, &r12)?;
    let mut x = DMatrix::zeros(rank, n);
    for (pos, &col) in f.pivots.iter().enumerate() {
        if pos < rank {
            x[(pos, col)] = 1.0;
        } else {
            x.set_column(col, &t.column(pos - rank));
        }
    }
    Ok(OneSidedID { m: x, skeleton: f.pivots[..rank].to_vec(), axis: Axis::Column })
}

/// The sketch that [`osid1`] and [`rocs1`] decompose: `A·S` (m×(k+s)) for
/// a row ID, `SᵀA` ((k+s)×n) for a column ID.
pub fn osid1_sketch(
    a: &dyn LinearOperator,
    k: usize,
    oversample: usize,
    axis: Axis,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<DMatrix<f64>, LowRankError> {
    let (m, n) = (a.nrows(), a.ncols());
    check_rank(k + oversample, m, n, "k + oversample")?;
    Ok(match axis {
        Axis::Row => {
            let s = tsog1(a, k + oversample, cfg, seed)?;
            a.apply_mat(&s)
        }
        Axis::Column => {
            let s = tsog1(&AdjointOperator(a), k + oversample, cfg, seed)?;
            a.apply_adjoint_mat(&s).transpose()
        }
    })
}

/// Randomized one-sided ID: an ID of a sketch, reused for `A`.
pub fn osid1(
    a: &dyn LinearOperator,
    k: usize,
    oversample: usize,
    axis: Axis,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<OneSidedID, LowRankError> {
    let y = osid1_sketch(a, k, oversample, axis, cfg, seed)?;
    osid_qrcp(&y, k, axis)
}

/// Row or column subset selection by QRCP on a sketch.
pub fn rocs1(
    a: &dyn LinearOperator,
    k: usize,
    oversample: usize,
    axis: Axis,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<Vec<usize>, LowRankError> {
    let y = osid1_sketch(a, k, oversample, axis, cfg, seed)?;
    let f = match axis {
        Axis::Row => qrcp(&y.transpose(), Some(k)),
        Axis::Column => qrcp(&y, Some(k)),
    };
    Ok(f.pivots[..k].to_vec())
}

/// `A ≈ A[:, J] · U · A[I, :]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CURFactors {
    pub j: Vec<usize>,
    pub u: DMatrix<f64>,
    pub i: Vec<usize>,
}

impl CURFactors {
    pub fn reconstruct(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        select_columns(a, &self.j) * &self.u * select_rows(a, &self.i)
    }
}

/// CUR built from a randomized one-sided ID and a QRCP of the selected
/// columns (tall input) or rows (wide input).
pub fn curd1(
    a: &DMatrix<f64>,
    k: usize,
    oversample: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<CURFactors, LowRankError> {
    if a.nrows() >= a.ncols() {
        let id = osid1(a, k, oversample, Axis::Column, cfg, seed)?;
        let r = id.rank();
        let c = select_columns(a, &id.skeleton);
        let rows = qrcp(&c.transpose(), Some(r)).pivots[..r].to_vec();
        let u = &id.m * pinv(&select_rows(a, &rows));
        Ok(CURFactors { j: id.skeleton, u, i: rows })
    } else {
        let id = osid1(a, k, oversample, Axis::Row, cfg, seed)?;
        let r = id.rank();
        let rr = select_rows(a, &id.skeleton);
        let cols = qrcp(&rr, Some(r)).pivots[..r].to_vec();
        let u = pinv(&select_columns(a, &cols)) * &id.m;
        Ok(CURFactors { j: cols, u, i: id.skeleton })
    }
}
