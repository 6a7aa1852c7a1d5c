//! LSQR, preconditioned CG and Lanczos tridiagonalization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LinalgError, LinearOperator};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IterativeReport {
    pub iterations: usize,
    pub converged: bool,
    /// One entry per iteration: LSQR records the normalized normal-equation
    /// residual, PCG the relative residual.
    pub residual_history: Vec<f64>,
}

/// LSQR for `min ‖F z − g‖`, warm-started at `z0`.
///
/// Stops when `‖Fᵀr‖ / (‖F‖_est ‖r‖) ≤ tol`, where `‖F‖_est` is the running
/// Frobenius norm of the bidiagonal factor, or when `‖r‖ ≤ tol·‖g‖`
/// (consistent systems). A zero bidiagonalization vector ends the run as
/// converged.
pub fn lsqr(
    f: &dyn LinearOperator,
    g: &DVector<f64>,
    tol: f64,
    maxit: usize,
    z0: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, IterativeReport), LinalgError> {
    lsqr_scaled(f, g, tol, maxit, z0, g.norm())
}

/// [`lsqr`] with the consistent-system test taken relative to `gnorm`
/// instead of `‖g‖`, for correction solves whose right-hand side is a
/// residual.
pub fn lsqr_scaled(
    f: &dyn LinearOperator,
    g: &DVector<f64>,
    tol: f64,
    maxit: usize,
    z0: Option<&DVector<f64>>,
    gnorm: f64,
) -> Result<(DVector<f64>, IterativeReport), LinalgError> {
    let (m, n) = (f.nrows(), f.ncols());
    if g.len() != m {
        return Err(LinalgError::Dimension(format!("rhs has length {}, operator has {} rows", g.len(), m)));
    }
    let mut z = match z0 {
        Some(z0) if z0.len() == n => z0.clone(),
        Some(z0) => return Err(LinalgError::Dimension(format!("warm start has length {}, expected {}", z0.len(), n))),
        None => DVector::zeros(n),
    };
    let mut report = IterativeReport::default();

    let mut u = if z0.is_some() { g - f.apply(&z) } else { g.clone() };
    let mut beta = u.norm();
    if beta == 0.0 {
        report.converged = true;
        return Ok((z, report));
    }
    u /= beta;
    let mut v = f.apply_adjoint(&u);
    let mut alpha = v.norm();
    if alpha == 0.0 {
        report.converged = true;
        return Ok((z, report));
    }
    v /= alpha;

    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm_sq = 0.0;

    for _ in 0..maxit {
        u = f.apply(&v) - &u * alpha;
        beta = u.norm();
        anorm_sq += alpha * alpha + beta * beta;
        if beta > 0.0 {
            u /= beta;
        }
        v = f.apply_adjoint(&u) - &v * beta;
        alpha = v.norm();
        if alpha > 0.0 {
            v /= alpha;
        }

        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        z.axpy(phi / rho, &w, 1.0);
        w = &v - &w * (theta / rho);

        let rnorm = phibar.abs();
        let arnorm = (phibar * alpha * c).abs();
        let anorm = anorm_sq.sqrt();
        let measure = if rnorm > 0.0 && anorm > 0.0 { arnorm / (anorm * rnorm) } else { 0.0 };
        report.iterations += 1;
        report.residual_history.push(measure);

        if measure <= tol || rnorm <= tol * gnorm || beta == 0.0 || alpha == 0.0 {
            report.converged = true;
            break;
        }
    }
    Ok((z, report))
}

/// Preconditioned conjugate gradients for `(G + μI) x = h`, stopping on the
/// relative residual `‖(G+μI)x − h‖ / ‖h‖ ≤ tol`.
pub fn pcg(
    g: &dyn LinearOperator,
    mu: f64,
    h: &DVector<f64>,
    pinv: &dyn LinearOperator,
    tol: f64,
    maxit: usize,
    x0: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, IterativeReport), LinalgError> {
    let n = g.ncols();
    if g.nrows() != n || h.len() != n || pinv.nrows() != n || pinv.ncols() != n {
        return Err(LinalgError::Dimension("pcg requires square G, P⁻¹ and a conformant rhs".into()));
    }
    let mut report = IterativeReport::default();
    let hnorm = h.norm();
    if hnorm == 0.0 {
        report.converged = true;
        return Ok((DVector::zeros(n), report));
    }
    let shifted = |p: &DVector<f64>| g.apply(p) + p * mu;
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut r = if x0.is_some() { h - shifted(&x) } else { h.clone() };
    if r.norm() / hnorm <= tol {
        report.converged = true;
        return Ok((x, report));
    }
    let mut z = pinv.apply(&r);
    let mut rz = r.dot(&z);
    if rz <= 0.0 {
        return Err(LinalgError::IndefinitePreconditioner { iteration: 0 });
    }
    let mut p = z.clone();
    for it in 1..=maxit {
        let q = shifted(&p);
        let curv = p.dot(&q);
        if curv <= 0.0 {
            return Err(LinalgError::NegativeCurvature { iteration: it, value: curv });
        }
        let a = rz / curv;
        x.axpy(a, &p, 1.0);
        r.axpy(-a, &q, 1.0);
        let rel = r.norm() / hnorm;
        report.iterations = it;
        report.residual_history.push(rel);
        if rel <= tol {
            report.converged = true;
            break;
        }
        z = pinv.apply(&r);
        let rz_new = r.dot(&z);
        if rz_new <= 0.0 {
            return Err(LinalgError::IndefinitePreconditioner { iteration: it });
        }
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Ok((x, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reorth {
    None,
    #[default]
    Full,
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Krylov basis, one column per step (kept only with full reorthogonalization).
    pub basis: Option<DMatrix<f64>>,
}

impl LanczosResult {
    /// The symmetric tridiagonal (Jacobi) matrix.
    pub fn jacobi(&self) -> DMatrix<f64> {
        let s = self.alpha.len();
        let mut t = DMatrix::zeros(s, s);
        for i in 0..s {
            t[(i, i)] = self.alpha[i];
            if i + 1 < s {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }
}

/// `s` steps of Lanczos from the unit vector `v0`. Terminates early when
/// `β_j ≤ 1e-12·‖B‖_est` (invariant subspace found).
pub fn lanczos_tridiag(
    b: &dyn LinearOperator,
    v0: &DVector<f64>,
    s: usize,
    reorth: Reorth,
) -> Result<LanczosResult, LinalgError> {
    let n = b.ncols();
    if b.nrows() != n || v0.len() != n {
        return Err(LinalgError::Dimension("lanczos requires a square operator and conformant start".into()));
    }
    let norm = v0.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(LinalgError::StartVector { norm });
    }
    let mut alpha = Vec::with_capacity(s);
    let mut beta = Vec::with_capacity(s.saturating_sub(1));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(s);
    let mut v = v0.clone();
    let mut v_prev = DVector::zeros(n);
    let mut beta_prev = 0.0;
    let mut norm_est: f64 = 0.0;

    for j in 0..s {
        let mut w = b.apply(&v);
        let a = v.dot(&w);
        w.axpy(-a, &v, 1.0);
        w.axpy(-beta_prev, &v_prev, 1.0);
        alpha.push(a);
        norm_est = norm_est.max(a.abs()).max(beta_prev);
        if reorth == Reorth::Full {
            basis.push(v.clone());
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
            }
        }
        if j + 1 == s {
            break;
        }
        let bj = w.norm();
        if bj == 0.0 || bj <= 1e-12 * norm_est {
            break;
        }
        beta.push(bj);
        v_prev = std::mem::replace(&mut v, w / bj);
        beta_prev = bj;
    }
    let basis = if reorth == Reorth::Full && !basis.is_empty() { Some(DMatrix::from_columns(&basis)) } else { None };
    Ok(LanczosResult { alpha, beta, basis })
}
