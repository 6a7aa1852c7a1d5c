//! Low-rank approximation: data-aware sketching, rangefinders, QB
//! decompositions, spectral decompositions, interpolative and CUR
//! decompositions, and cheap norm estimators.

mod ids;
mod norms;
mod spectral;

use log::debug;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{orth, qr_econ, solve_lower_transposed, LinalgError, LinearOperator};
use crate::rng::RngKey;
use crate::sketching::{SketchError, SketchFamily, SketchOperator};

pub use ids::{curd1, osid1, osid1_sketch, osid_qrcp, rocs1, Axis, CURFactors, OneSidedID};
pub use norms::{frob_estimate, spectral_bound};
pub use spectral::{evd1, evd2, svd1, EVDFactors, SVDFactors};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LowRankError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },
    #[error("Cholesky of the shifted core failed after {attempts} shift escalations")]
    ShiftEscalation { attempts: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stabilizer {
    #[default]
    Qr,
    Lu,
    None,
}

/// Controls the power-iteration sketch used by every driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub passes: usize,
    /// Stabilize after every `stab_period` products.
    pub stab_period: usize,
    pub stabilizer: Stabilizer,
    pub family: SketchFamily,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { passes: 2, stab_period: 1, stabilizer: Stabilizer::Qr, family: SketchFamily::Gaussian }
    }
}

impl PowerConfig {
    pub fn with_passes(passes: usize) -> Self {
        Self { passes, ..Self::default() }
    }
}

pub const DEFAULT_OVERSAMPLE: usize = 5;

/// `A ≈ Q B` with column-orthonormal `Q`.
#[derive(Clone, Debug)]
pub struct QBFactors {
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Tracked ‖A − QB‖_F², when the producing algorithm maintains one.
    pub squared_error: Option<f64>,
}

impl QBFactors {
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.q * &self.b
    }
}

fn check_rank(k: usize, m: usize, n: usize, what: &str) -> Result<(), LowRankError> {
    if k == 0 || k > m.min(n) {
        return Err(LowRankError::Invalid(format!("{what} = {k} must lie in 1..={}", m.min(n))));
    }
    Ok(())
}

/// Oblivious tall `rows × k` operator, materialized.
fn oblivious_tall(family: &SketchFamily, rows: usize, k: usize, key: RngKey) -> Result<DMatrix<f64>, LowRankError> {
    Ok(family.sample_wide(k, rows, key)?.to_dense().transpose())
}

fn stabilize(s: DMatrix<f64>, how: Stabilizer) -> DMatrix<f64> {
    match how {
        Stabilizer::Qr => qr_econ(&s).q,
        Stabilizer::Lu => lu_lower(&s),
        Stabilizer::None => s,
    }
}

/// The row-permuted unit lower factor `PᵀL` from partial-pivoting LU of a
/// tall matrix. It spans the same range as the input and is well scaled.
fn lu_lower(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = a.shape();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    for j in 0..k.min(m) {
        let mut p = j;
        for i in j + 1..m {
            if w[(i, j)].abs() > w[(p, j)].abs() {
                p = i;
            }
        }
        w.swap_rows(j, p);
        perm.swap(j, p);
        let pivot = w[(j, j)];
        if pivot == 0.0 {
            continue;
        }
        for i in j + 1..m {
            let f = w[(i, j)] / pivot;
            w[(i, j)] = f;
            for c in j + 1..k {
                let t = w[(j, c)];
                w[(i, c)] -= f * t;
            }
        }
    }
    let mut out = DMatrix::zeros(m, k);
    for (row, &orig) in perm.iter().enumerate() {
        for c in 0..k {
            out[(orig, c)] = match row.cmp(&c) {
                std::cmp::Ordering::Greater => w[(row, c)],
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    out
}

/// Power-iteration sketch: an n×k matrix whose range is aligned with the
/// dominant right singular subspace of `A`. Uses exactly `cfg.passes`
/// products with `A` or `Aᵀ`; with zero passes it never touches `A`.
pub fn tsog1(a: &dyn LinearOperator, k: usize, cfg: &PowerConfig, seed: RngKey) -> Result<DMatrix<f64>, LowRankError> {
    let (m, n) = (a.nrows(), a.ncols());
    check_rank(k, m, n, "sketch size")?;
    if cfg.stab_period == 0 {
        return Err(LowRankError::Invalid("stabilization period must be at least 1".into()));
    }
    let p = cfg.passes;
    let mut done = 0;
    let mut s = if p.is_multiple_of(2) {
        oblivious_tall(&cfg.family, n, k, seed)?
    } else {
        let start = oblivious_tall(&cfg.family, m, k, seed)?;
        done = 1;
        let s = a.apply_adjoint_mat(&start);
        if done % cfg.stab_period == 0 {
            stabilize(s, cfg.stabilizer)
        } else {
            s
        }
    };
    while p - done >= 2 {
        s = a.apply_mat(&s);
        done += 1;
        if done % cfg.stab_period == 0 {
            s = stabilize(s, cfg.stabilizer);
        }
        s = a.apply_adjoint_mat(&s);
        done += 1;
        if done % cfg.stab_period == 0 {
            s = stabilize(s, cfg.stabilizer);
        }
    }
    Ok(s)
}

/// Orthonormal basis for the range of `A·tsog1(A, k)`; rank-deficient
/// directions are dropped.
pub fn rf1(a: &dyn LinearOperator, k: usize, cfg: &PowerConfig, seed: RngKey) -> Result<DMatrix<f64>, LowRankError> {
    let s = tsog1(a, k, cfg, seed)?;
    Ok(orth(&a.apply_mat(&s)))
}

/// QB from a single rangefinder call: `B = QᵀA`.
pub fn qb1(a: &dyn LinearOperator, k: usize, cfg: &PowerConfig, seed: RngKey) -> Result<QBFactors, LowRankError> {
    let q = rf1(a, k, cfg, seed)?;
    let b = a.apply_adjoint_mat(&q).transpose();
    Ok(QBFactors { q, b, squared_error: None })
}

/// `A − QB`, applied implicitly.
struct Deflated<'a> {
    a: &'a DMatrix<f64>,
    q: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
}

impl LinearOperator for Deflated<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.ncols()
    }
    fn apply(&self, x: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        self.a * x - self.q * (self.b * x)
    }
    fn apply_adjoint(&self, y: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        self.a.tr_mul(y) - self.b.tr_mul(&self.q.tr_mul(y))
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.a * x - self.q * (self.b * x)
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.a.tr_mul(y) - self.b.tr_mul(&self.q.tr_mul(y))
    }
}

/// The tracked error is recomputed from scratch every this many blocks.
pub const QB2_RECOMPUTE_PERIOD: usize = 8;

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn vcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Fully adaptive blocked QB. Grows `Q` block by block until
/// ‖A − QB‖_F ≤ tol·‖A‖_F or `k` columns are reached.
///
/// The squared error is downdated by ‖B_i‖_F² per block, recomputed
/// directly every [`QB2_RECOMPUTE_PERIOD`] blocks, and confirmed directly
/// before declaring convergence.
pub fn qb2(
    a: &DMatrix<f64>,
    k: usize,
    tol: f64,
    block_size: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<QBFactors, LowRankError> {
    let (m, n) = a.shape();
    check_rank(k, m, n, "target rank")?;
    if block_size == 0 {
        return Err(LowRankError::Invalid("block size must be at least 1".into()));
    }
    let norm_sq = a.norm_squared();
    let threshold = tol.max(0.0).powi(2) * norm_sq;
    let mut q = DMatrix::zeros(m, 0);
    let mut b = DMatrix::zeros(0, n);
    let mut sq_err = norm_sq;
    let direct = |q: &DMatrix<f64>, b: &DMatrix<f64>| (a - q * b).norm_squared();

    let mut blocks = 0;
    while q.ncols() < k && sq_err > threshold {
        let width = block_size.min(k - q.ncols());
        let mut qi = {
            let deflated = Deflated { a, q: &q, b: &b };
            let s = tsog1(&deflated, width, cfg, seed.derive(blocks as u64))?;
            let y = deflated.apply_mat(&s);
            // A numerically exhausted residual has nothing left to add.
            if y.norm() <= 1e-14 * norm_sq.sqrt() {
                break;
            }
            orth(&y)
        };
        // Two rounds of projection keep the new block orthogonal to Q.
        for _ in 0..2 {
            qi = orth(&(&qi - &q * q.tr_mul(&qi)));
        }
        if qi.ncols() == 0 {
            break;
        }
        let bi = qi.tr_mul(a);
        sq_err -= bi.norm_squared();
        q = hcat(&q, &qi);
        b = vcat(&b, &bi);
        blocks += 1;
        if blocks % QB2_RECOMPUTE_PERIOD == 0 {
            sq_err = direct(&q, &b);
        }
        if sq_err <= threshold {
            sq_err = direct(&q, &b);
        }
    }
    debug!("qb2: {} blocks, rank {}, squared error {sq_err:e}", blocks, q.ncols());
    Ok(QBFactors { q, b, squared_error: Some(sq_err.max(0.0)) })
}

/// Pass-efficient QB: one product with `A` and one with `Aᵀ`, after which
/// blocks are extracted from `G = AS` and `H = AᵀG` alone.
pub fn qb3(
    a: &dyn LinearOperator,
    k: usize,
    tol: f64,
    block_size: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<QBFactors, LowRankError> {
    let (m, n) = (a.nrows(), a.ncols());
    if k == 0 || k >= m.min(n) {
        return Err(LowRankError::Invalid(format!("target rank {k} must lie in 1..{}", m.min(n))));
    }
    if block_size == 0 {
        return Err(LowRankError::Invalid("block size must be at least 1".into()));
    }
    let s = tsog1(a, k, cfg, seed)?;
    let g = a.apply_mat(&s);
    let h = a.apply_adjoint_mat(&g);
    let norm_sq = a.frobenius_norm_sq();
    let threshold = tol.max(0.0).powi(2) * norm_sq;
    let g_scale = g.norm();

    let mut q = DMatrix::zeros(m, 0);
    let mut b = DMatrix::zeros(0, n);
    let mut sq_err = norm_sq;
    let mut start = 0;
    while start < k {
        let width = block_size.min(k - start);
        let si = s.columns(start, width).into_owned();
        let gi = g.columns(start, width);
        let hi = h.columns(start, width);
        let bsi = &b * &si;
        let yi = gi - &q * &bsi;
        let first = qr_econ(&yi);
        let projected = &first.q - &q * q.tr_mul(&first.q);
        let second = qr_econ(&projected);
        let mut qi = second.q;
        let mut ri = &second.r * &first.r;

        // A vanishing diagonal means the sketch has run out of new
        // directions; keep only the well-determined leading columns.
        let keep = (0..width).take_while(|&j| ri[(j, j)].abs() > 1e-12 * g_scale).count();
        let exhausted = keep < width;
        if keep == 0 {
            break;
        }
        if exhausted {
            qi = qi.columns(0, keep).into_owned();
            ri = ri.view((0, 0), (keep, keep)).into_owned();
        }
        let yi = yi.columns(0, keep).into_owned();
        let bsi = bsi.columns(0, keep).into_owned();
        let hi = hi.columns(0, keep).into_owned();

        // Qᵢᵀ A = Rᵢ⁻ᵀ (Hᵢᵀ − (YᵢᵀQ) B − (B Sᵢ)ᵀ B); the middle term is zero
        // in exact arithmetic and corrects for the reorthogonalization.
        let rhs = hi.transpose() - (yi.tr_mul(&q)) * &b - bsi.tr_mul(&b);
        let bi = solve_lower_transposed(&ri, &rhs)?;
        sq_err -= bi.norm_squared();
        q = hcat(&q, &qi);
        b = vcat(&b, &bi);
        start += width;
        if exhausted || sq_err <= threshold {
            break;
        }
    }
    Ok(QBFactors { q, b, squared_error: Some(sq_err.max(0.0)) })
}
