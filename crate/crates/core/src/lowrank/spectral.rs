use log::warn;
use nalgebra::{DMatrix, DVector};

use super::{check_rank, qb2, tsog1, LowRankError, PowerConfig};
use crate::detkernels::{chol, eigh, solve_lower_transposed, svd, LinearOperator};
use crate::rng::RngKey;

/// `A ≈ U diag(σ) Vᵀ` with σ nonincreasing.
#[derive(Clone, Debug)]
pub struct SVDFactors {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SVDFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        crate::synth::compose(&self.u, &self.sigma, &self.v)
    }
}

/// `A ≈ V diag(λ) Vᵀ` with λ sorted by decreasing magnitude.
#[derive(Clone, Debug)]
pub struct EVDFactors {
    pub v: DMatrix<f64>,
    pub lambda: DVector<f64>,
    /// Eigenvalues that came out negative after removing the stabilizing
    /// shift and were clamped to zero.
    pub clamped: usize,
}

impl EVDFactors {
    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        crate::synth::compose(&self.v, &self.lambda, &self.v)
    }
}

/// Low-rank SVD from an adaptive QB of rank up to `k + s`, truncated to `k`.
pub fn svd1(
    a: &DMatrix<f64>,
    k: usize,
    tol: f64,
    oversample: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<SVDFactors, LowRankError> {
    let (m, n) = a.shape();
    check_rank(k + oversample, m, n, "k + oversample")?;
    let qb = qb2(a, k + oversample, tol, k + oversample, cfg, seed)?;
    let f = svd(&qb.b).truncate(k.min(qb.rank()));
    Ok(SVDFactors { u: &qb.q * f.u, sigma: f.sigma, v: f.v })
}

/// Largest |A − Aᵀ| entry, and the tolerance it is held to.
fn asymmetry(a: &DMatrix<f64>) -> (f64, f64) {
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    (asym, 1e-10 * scale.max(f64::MIN_POSITIVE))
}

/// Low-rank eigendecomposition of a symmetric (possibly indefinite) matrix.
pub fn evd1(
    a: &DMatrix<f64>,
    k: usize,
    tol: f64,
    oversample: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<EVDFactors, LowRankError> {
    let (m, n) = a.shape();
    if m != n {
        return Err(LowRankError::Invalid(format!("evd1 needs a square matrix, got {m}x{n}")));
    }
    let (asym, tolerance) = asymmetry(a);
    if asym > tolerance {
        return Err(LowRankError::NotHermitian { asymmetry: asym, tolerance });
    }
    check_rank(k + oversample, m, n, "k + oversample")?;
    let qb = qb2(a, k + oversample, tol / 2.0, k + oversample, cfg, seed)?;
    let c = &qb.b * &qb.q;
    // C = QᵀAQ is symmetric up to rounding.
    let (vals, vecs) = eigh(&((&c + c.transpose()) * 0.5));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
    let r = k.min(order.len());
    let mut v = DMatrix::zeros(n, r);
    let mut lambda = DVector::zeros(r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        v.set_column(dst, &(&qb.q * vecs.column(src)));
        lambda[dst] = vals[src];
    }
    Ok(EVDFactors { v, lambda, clamped: 0 })
}

/// Maximum number of tenfold shift increases before giving up.
const MAX_SHIFT_ESCALATIONS: usize = 3;

/// Nyström eigendecomposition of a psd operator. The result satisfies
/// `V diag(λ) Vᵀ ⪯ A` up to rounding.
pub fn evd2(
    a: &dyn LinearOperator,
    k: usize,
    oversample: usize,
    seed: RngKey,
    power_passes: usize,
) -> Result<EVDFactors, LowRankError> {
    let n = a.ncols();
    if a.nrows() != n {
        return Err(LowRankError::Invalid(format!("evd2 needs a square operator, got {}x{n}", a.nrows())));
    }
    check_rank(k + oversample, n, n, "k + oversample")?;
    let s = tsog1(a, k + oversample, &PowerConfig::with_passes(power_passes), seed)?;
    let y = a.apply_mat(&s);
    let y_norm = svd(&y).sigma.get(0).copied().unwrap_or(0.0);
    if y_norm == 0.0 {
        return Ok(EVDFactors { v: DMatrix::zeros(n, 0), lambda: DVector::zeros(0), clamped: 0 });
    }

    let mut nu = (n as f64).sqrt() * f64::EPSILON * y_norm;
    let mut attempt = 0;
    let (y_nu, r) = loop {
        let y_nu = &y + &s * nu;
        let c = s.tr_mul(&y_nu);
        match chol(&((&c + c.transpose()) * 0.5)) {
            Ok(r) => break (y_nu, r),
            Err(e) if attempt < MAX_SHIFT_ESCALATIONS => {
                warn!("evd2: Cholesky failed ({e}); raising shift from {nu:e}");
                nu *= 10.0;
                attempt += 1;
            }
            Err(_) => return Err(LowRankError::ShiftEscalation { attempts: attempt }),
        }
    };

    // B = Y_ν R⁻¹, computed as (R⁻ᵀ Y_νᵀ)ᵀ.
    let b = solve_lower_transposed(&r, &y_nu.transpose())?.transpose();
    let f = svd(&b);
    let kept = f.sigma.iter().take(k).take_while(|&&sv| sv * sv > nu).count();
    let mut clamped = 0;
    let lambda = DVector::from_fn(kept, |j, _| {
        let l = f.sigma[j] * f.sigma[j] - nu;
        if l < 0.0 {
            clamped += 1;
        }
        l.max(0.0)
    });
    Ok(EVDFactors { v: f.u.columns(0, kept).into_owned(), lambda, clamped })
}
