//! Sketch-and-solve and sketch-and-precondition least squares, saddle point
//! solvers, preconditioner generation and Nyström-preconditioned CG.
//!
//! The saddle point pair for data `(A, b, c, μ)` is
//! `min_x ‖Ax − b‖² + μ‖x‖² + 2cᵀx` together with its dual in `y = b − Ax`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{
    self, chol, inverse_upper, lsqr, lsqr_scaled, pcg, qr_econ, rank_tol, svd, IterativeReport, LinalgError,
    LinearOperator,
};
use crate::lowrank::{evd2, LowRankError};
use crate::rng::RngKey;
use crate::sketching::{AugmentedSketch, SketchError, SketchFamily, SketchOperator};

#[derive(Debug, Error)]
pub enum LstsqError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("sketch has numerical rank {rank} < {n}; use the SVD preconditioner")]
    RankDeficient { rank: usize, n: usize },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    LowRank(#[from] LowRankError),
}

/// Data of the primal/dual saddle point pair.
#[derive(Clone, Debug)]
pub struct SaddleProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub mu: f64,
}

impl SaddleProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: Option<DVector<f64>>, mu: f64) -> Result<Self, LstsqError> {
        let (m, n) = a.shape();
        if m < n {
            return Err(LstsqError::Dimension(format!("need m >= n, got {m}x{n}")));
        }
        if b.len() != m {
            return Err(LstsqError::Dimension(format!("b has length {}, expected {m}", b.len())));
        }
        let c = c.unwrap_or_else(|| DVector::zeros(n));
        if c.len() != n {
            return Err(LstsqError::Dimension(format!("c has length {}, expected {n}", c.len())));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(LstsqError::Invalid(format!("mu must be finite and nonnegative, got {mu}")));
        }
        Ok(Self { a, b, c, mu })
    }

    /// ‖(AᵀA + μI)x − (Aᵀb − c)‖.
    pub fn normal_equation_residual(&self, x: &DVector<f64>) -> f64 {
        let lhs = self.a.tr_mul(&(&self.a * x)) + x * self.mu;
        let rhs = self.a.tr_mul(&self.b) - &self.c;
        (lhs - rhs).norm()
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub report: IterativeReport,
}

#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    pub report: IterativeReport,
    /// True when a singular triangular factor forced the SVD path.
    pub used_svd_fallback: bool,
}

/// Solver settings shared by the sketch-and-precondition drivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SapConfig {
    pub tol: f64,
    pub maxit: usize,
    pub sampling_factor: f64,
    pub family: SketchFamily,
    pub seed: RngKey,
}

impl Default for SapConfig {
    fn default() -> Self {
        Self { tol: 1e-12, maxit: 100, sampling_factor: 4.0, family: SketchFamily::default(), seed: RngKey::new(0) }
    }
}

impl SapConfig {
    pub fn sketch_rows(&self, m: usize, n: usize) -> usize {
        ((n as f64 * self.sampling_factor).ceil() as usize).min(m).max(1)
    }

    fn sample(&self, m: usize, n: usize) -> Result<crate::sketching::SketchOp, LstsqError> {
        let d = self.sketch_rows(m, n);
        if d < n {
            return Err(LstsqError::Invalid(format!("sketch size {d} is smaller than n = {n}")));
        }
        Ok(self.family.sample_wide(d, m, self.seed)?)
    }
}

/// Right preconditioner `M` together with the sketch factorization it came from.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    /// n×k matrix, k = rank used.
    pub m: DMatrix<f64>,
    pub svd: Option<SketchSvd>,
    pub mu_used: f64,
}

/// SVD data of a (possibly regularized) sketch: `A_sk = U diag(σ) Vᵀ`, with
/// `σ̂ = √(σ² + μ)` and `V` spanning all of Rⁿ when μ > 0.
#[derive(Clone, Debug)]
pub struct SketchSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub sigma_hat: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Preconditioner {
    pub fn rank(&self) -> usize {
        self.m.ncols()
    }

    /// `[U D₁; V D₂]` with `D₁ = diag(σ/σ̂)` and `D₂ = diag(√μ/σ̂)`: the left
    /// singular vectors of `[A_sk; √μ I]`.
    pub fn augmented_left_singular_vectors(&self) -> Option<DMatrix<f64>> {
        let f = self.svd.as_ref()?;
        let (d, k) = (f.u.nrows(), f.sigma_hat.len());
        let n = f.v.nrows();
        let root_mu = self.mu_used.sqrt();
        let mut out = DMatrix::zeros(d + n, k);
        for j in 0..k {
            let d1 = f.sigma[j] / f.sigma_hat[j];
            let d2 = root_mu / f.sigma_hat[j];
            out.view_mut((0, j), (d, 1)).copy_from(&(f.u.column(j) * d1));
            out.view_mut((d, j), (n, 1)).copy_from(&(f.v.column(j) * d2));
        }
        Some(out)
    }
}

/// QR/Cholesky preconditioner `M = R⁻¹`: from Householder QR of `A_sk` when
/// μ = 0, otherwise from Cholesky of `A_skᵀA_sk + μI`.
pub fn make_precond_qr(a_sk: &DMatrix<f64>, mu: f64) -> Result<Preconditioner, LstsqError> {
    let (d, n) = a_sk.shape();
    let r = if mu == 0.0 {
        if d < n {
            return Err(LstsqError::RankDeficient { rank: d, n });
        }
        let f = qr_econ(a_sk);
        check_triangular_rank(&f.r, d, n)?;
        f.r
    } else {
        let gram = a_sk.tr_mul(a_sk) + DMatrix::<f64>::identity(n, n) * mu;
        chol(&gram)?
    };
    Ok(Preconditioner { m: inverse_upper(&r)?, svd: None, mu_used: mu })
}

fn check_triangular_rank(r: &DMatrix<f64>, d: usize, n: usize) -> Result<(), LstsqError> {
    let diag_max = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = rank_tol(diag_max, d, n);
    let rank = (0..n).filter(|&i| r[(i, i)].abs() > tol).count();
    if rank < n || diag_max == 0.0 {
        return Err(LstsqError::RankDeficient { rank, n });
    }
    Ok(())
}

/// SVD preconditioner: `M = V diag(1/σ̂)`. With μ = 0 only singular values
/// above `max(d, n)·ε·σ₁` are kept.
pub fn make_precond_svd(a_sk: &DMatrix<f64>, mu: f64) -> Preconditioner {
    let (d, n) = a_sk.shape();
    // A short sketch is padded with zero rows so that V covers all of Rⁿ.
    let padded;
    let source = if d < n && mu > 0.0 {
        padded = a_sk.clone().resize_vertically(n, 0.0);
        &padded
    } else {
        a_sk
    };
    let f = svd(source);
    let k = if mu > 0.0 { f.sigma.len() } else { detkernels::numerical_rank(&f.sigma, d, n) };
    let f = f.truncate(k);
    let u = f.u.rows(0, d.min(f.u.nrows())).into_owned();
    let sigma_hat = f.sigma.map(|s| (s * s + mu).sqrt());
    let mut m = f.v.clone();
    for j in 0..k {
        m.column_mut(j).scale_mut(1.0 / sigma_hat[j]);
    }
    Preconditioner { m, svd: Some(SketchSvd { u, sigma: f.sigma, sigma_hat, v: f.v }), mu_used: mu }
}

/// `x̂ = (SA)†(Sb)` for a freshly sampled d×m operator.
pub fn sketch_and_solve_ols(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    d: usize,
    seed: RngKey,
    family: SketchFamily,
) -> Result<DVector<f64>, LstsqError> {
    let (m, n) = a.shape();
    if d < n || d > m {
        return Err(LstsqError::Invalid(format!("sketch size must satisfy n <= d <= m, got d = {d}")));
    }
    let s = family.sample_wide(d, m, seed)?;
    sketch_and_solve_with(a, b, &s)
}

/// Sketch-and-solve with a caller-supplied operator.
pub fn sketch_and_solve_with(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    s: &dyn SketchOperator,
) -> Result<DVector<f64>, LstsqError> {
    check_ls_dims(a, b)?;
    let a_sk = s.apply_left(a);
    let b_sk = s.apply_left(&DMatrix::from_column_slice(b.len(), 1, b.as_slice())).column(0).into_owned();
    Ok(detkernels::pinv_solve(&a_sk, &b_sk))
}

fn check_ls_dims(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(), LstsqError> {
    if a.nrows() != b.len() {
        return Err(LstsqError::Dimension(format!("A has {} rows, b has length {}", a.nrows(), b.len())));
    }
    if a.nrows() < a.ncols() {
        return Err(LstsqError::Dimension(format!("need m >= n, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

fn sketch_vector(s: &dyn SketchOperator, v: &DVector<f64>) -> DVector<f64> {
    s.apply_left(&DMatrix::from_column_slice(v.len(), 1, v.as_slice())).column(0).into_owned()
}

/// `A·R⁻¹` applied through triangular solves.
struct TriangularPreconditioned<'a> {
    a: &'a DMatrix<f64>,
    r: &'a DMatrix<f64>,
}

impl LinearOperator for TriangularPreconditioned<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.r.ncols()
    }
    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let x = self.r.solve_upper_triangular(z).expect("nonsingular triangular factor");
        self.a * x
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let t = self.a.tr_mul(y);
        self.r.tr_solve_upper_triangular(&t).expect("nonsingular triangular factor")
    }
}

/// Blendenpik-style overdetermined least squares: QR of the sketch, presolve
/// `z₀ = Qᵀ(Sb)`, LSQR on `A·R⁻¹`, return `R⁻¹z`, followed by one correction
/// solve on the true residual.
pub fn spo1(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &SapConfig) -> Result<LstsqSolution, LstsqError> {
    check_ls_dims(a, b)?;
    let s = cfg.sample(a.nrows(), a.ncols())?;
    spo1_with_sketch(a, b, &s, cfg.tol, cfg.maxit)
}

pub fn spo1_with_sketch(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    s: &dyn SketchOperator,
    tol: f64,
    maxit: usize,
) -> Result<LstsqSolution, LstsqError> {
    check_ls_dims(a, b)?;
    let n = a.ncols();
    if b.norm() == 0.0 {
        return Ok(LstsqSolution {
            x: DVector::zeros(n),
            report: IterativeReport { iterations: 0, converged: true, residual_history: vec![] },
            used_svd_fallback: false,
        });
    }
    let a_sk = s.apply_left(a);
    let (d, _) = a_sk.shape();
    let qr = qr_econ(&a_sk);
    if d < n || check_triangular_rank(&qr.r, d, n).is_err() {
        log::warn!("sketch QR factor is singular; falling back to the SVD preconditioner");
        let problem = SaddleProblem::new(a.clone(), b.clone(), None, 0.0)?;
        let sol = sps2_with_sketch(&problem, s, tol, maxit)?;
        return Ok(LstsqSolution { x: sol.x, report: sol.report, used_svd_fallback: true });
    }
    let b_sk = sketch_vector(s, b);
    let z0 = qr.q.tr_mul(&b_sk);
    let op = TriangularPreconditioned { a, r: &qr.r };
    // Two passes: LSQR to √tol, then LSQR on the true residual to tol.
    // Applying R⁻¹ has relative error near ε·cond(R), so a single pass
    // stalls well above the attainable residual when A is ill conditioned;
    // the correction pass works at the scale of the remaining error.
    let (z, mut report) = lsqr(&op, b, tol.sqrt(), maxit, Some(&z0))?;
    let mut x = qr.r.solve_upper_triangular(&z).ok_or(LinalgError::Singular { index: 0 })?;
    let r = b - a * &x;
    if r.norm() > tol * b.norm() && report.iterations < maxit {
        let (dz, refine) = lsqr_scaled(&op, &r, tol, maxit - report.iterations, None, b.norm())?;
        x += qr.r.solve_upper_triangular(&dz).ok_or(LinalgError::Singular { index: 0 })?;
        report.iterations += refine.iterations;
        report.converged = refine.converged;
        report.residual_history.extend(refine.residual_history);
    }
    Ok(LstsqSolution { x, report, used_svd_fallback: false })
}

/// `[A; √μ I]·M`, never formed.
struct AugmentedPreconditioned<'a> {
    a: &'a DMatrix<f64>,
    m: &'a DMatrix<f64>,
    root_mu: f64,
}

impl LinearOperator for AugmentedPreconditioned<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows() + if self.root_mu > 0.0 { self.a.ncols() } else { 0 }
    }
    fn ncols(&self) -> usize {
        self.m.ncols()
    }
    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let x = self.m * z;
        let ax = self.a * &x;
        if self.root_mu > 0.0 {
            let mut out = DVector::zeros(self.nrows());
            out.rows_mut(0, ax.len()).copy_from(&ax);
            out.rows_mut(ax.len(), x.len()).copy_from(&(x * self.root_mu));
            out
        } else {
            ax
        }
    }
    fn apply_adjoint(&self, w: &DVector<f64>) -> DVector<f64> {
        let m = self.a.nrows();
        let mut t = self.a.tr_mul(&w.rows(0, m).into_owned());
        if self.root_mu > 0.0 {
            t.axpy(self.root_mu, &w.rows(m, self.a.ncols()), 1.0);
        }
        self.m.tr_mul(&t)
    }
}

/// Saddle point solver: SVD preconditioner of the (regularized) sketch,
/// right-hand-side shift absorbing `c`, presolve, LSQR, then `y = b − Ax`.
pub fn sps2(problem: &SaddleProblem, cfg: &SapConfig) -> Result<SaddleSolution, LstsqError> {
    let s = cfg.sample(problem.a.nrows(), problem.a.ncols())?;
    sps2_with_sketch(problem, &s, cfg.tol, cfg.maxit)
}

pub fn sps2_with_sketch(
    problem: &SaddleProblem,
    s: &dyn SketchOperator,
    tol: f64,
    maxit: usize,
) -> Result<SaddleSolution, LstsqError> {
    let SaddleProblem { a, b, c, mu } = problem;
    let (m, n) = a.shape();
    if s.ncols() != m {
        return Err(LstsqError::Dimension(format!("sketch has {} columns, A has {m} rows", s.ncols())));
    }
    let mu = *mu;
    let root_mu = mu.sqrt();
    let a_sk = s.apply_left(a);
    let pre = make_precond_svd(&a_sk, mu);
    let f = pre.svd.as_ref().expect("svd preconditioner carries its factors");
    let k = pre.rank();

    let (s_aug, u_aug, b_aug): (Box<dyn SketchOperator + '_>, DMatrix<f64>, DVector<f64>) = if mu > 0.0 {
        let mut b_aug = DVector::zeros(m + n);
        b_aug.rows_mut(0, m).copy_from(b);
        (
            Box::new(AugmentedSketch { inner: s, identity: n }),
            pre.augmented_left_singular_vectors().expect("svd data present"),
            b_aug,
        )
    } else {
        (Box::new(s), f.u.clone(), b.clone())
    };

    let mut b_mod = b_aug;
    if c.iter().any(|&ci| ci != 0.0) && k > 0 {
        let mut coef = f.v.tr_mul(c);
        for j in 0..k {
            coef[j] /= f.sigma_hat[j];
        }
        let v_hat = &u_aug * coef;
        let row = DMatrix::from_row_slice(1, v_hat.len(), v_hat.as_slice());
        let b_shift = s_aug.apply_right(&row).transpose().column(0).into_owned();
        b_mod -= b_shift;
    }
    let report;
    let x = if k == 0 {
        report = IterativeReport { iterations: 0, converged: true, residual_history: vec![] };
        DVector::zeros(n)
    } else {
        let z0 = u_aug.tr_mul(&sketch_vector(s_aug.as_ref(), &b_mod));
        let op = AugmentedPreconditioned { a, m: &pre.m, root_mu };
        let (z, rep) = lsqr(&op, &b_mod, tol, maxit, Some(&z0))?;
        report = rep;
        &pre.m * z
    };
    let y = b - a * &x;
    Ok(SaddleSolution { x, y, report })
}

/// Canonical μ → 0 limit of the saddle point pair:
/// `x₀ = (AᵀA)†(Aᵀb − c)`, `y₀ = (Aᵀ)†c + (I − AA†)b`.
pub fn limiting_solution(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let f = svd(a);
    let r = detkernels::numerical_rank(&f.sigma, a.nrows(), a.ncols());
    let (u, s, v) = (f.u.columns(0, r), f.sigma.rows(0, r), f.v.columns(0, r));
    let mut coef_x = v.tr_mul(&(a.tr_mul(b) - c));
    let mut coef_c = v.tr_mul(c);
    for j in 0..r {
        coef_x[j] /= s[j] * s[j];
        coef_c[j] /= s[j];
    }
    let x0 = v * coef_x;
    let y0 = u * coef_c + b - u * u.tr_mul(b);
    (x0, y0)
}

/// `P⁻¹ = V diag(λ+μ)⁻¹ Vᵀ + (μ+λ_ℓ)⁻¹ (I − VVᵀ)`, where λ_ℓ is the smallest
/// retained Nyström eigenvalue.
#[derive(Clone, Debug)]
pub struct NystromPreconditioner {
    pub v: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub mu: f64,
}

impl NystromPreconditioner {
    pub fn new(v: DMatrix<f64>, lambda: DVector<f64>, mu: f64) -> Self {
        Self { v, lambda, mu }
    }

    fn tail(&self) -> f64 {
        let lmin = self.lambda.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmin.is_finite() {
            self.mu + lmin
        } else {
            self.mu
        }
    }
}

impl LinearOperator for NystromPreconditioner {
    fn nrows(&self) -> usize {
        self.v.nrows()
    }
    fn ncols(&self) -> usize {
        self.v.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = self.tail();
        let coef = self.v.tr_mul(x);
        let scaled = DVector::from_fn(coef.len(), |j, _| coef[j] / (self.lambda[j] + self.mu));
        let proj = &self.v * &coef;
        &self.v * scaled + (x - proj) / t
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.apply(y)
    }
}

/// Settings for [`nystrom_pcg`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NystromConfig {
    pub rank: usize,
    pub oversample: usize,
    pub power_passes: usize,
    pub tol: f64,
    pub maxit: usize,
    pub seed: RngKey,
}

impl Default for NystromConfig {
    fn default() -> Self {
        Self { rank: 10, oversample: 5, power_passes: 0, tol: 1e-10, maxit: 500, seed: RngKey::new(0) }
    }
}

/// Builds the Nyström preconditioner for `G + μI`.
pub fn nystrom_preconditioner(
    g: &dyn LinearOperator,
    mu: f64,
    cfg: &NystromConfig,
) -> Result<NystromPreconditioner, LstsqError> {
    if !(mu > 0.0) {
        return Err(LstsqError::Invalid(format!("Nyström PCG needs mu > 0, got {mu}")));
    }
    let f = evd2(g, cfg.rank, cfg.oversample, cfg.seed, cfg.power_passes)?;
    Ok(NystromPreconditioner::new(f.v, f.lambda, mu))
}

/// Solves `(G + μI)x = h` by PCG with a Nyström preconditioner of rank ℓ.
pub fn nystrom_pcg(
    g: &dyn LinearOperator,
    mu: f64,
    h: &DVector<f64>,
    cfg: &NystromConfig,
) -> Result<(DVector<f64>, IterativeReport), LstsqError> {
    let n = g.ncols();
    if h.len() != n {
        return Err(LstsqError::Dimension(format!("h has length {}, expected {n}", h.len())));
    }
    if h.norm() == 0.0 {
        return Ok((DVector::zeros(n), IterativeReport { iterations: 0, converged: true, residual_history: vec![] }));
    }
    let p = nystrom_preconditioner(g, mu, cfg)?;
    Ok(pcg(g, mu, h, &p, cfg.tol, cfg.maxit, None)?)
}
