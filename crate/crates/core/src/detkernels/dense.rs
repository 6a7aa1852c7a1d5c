//! Dense factorizations. All backend calls are confined to this file.

use nalgebra::{DMatrix, DVector};

use super::LinalgError;

#[derive(Clone, Debug)]
pub struct QrFactors {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Economic Householder QR with a nonnegative diagonal in `R`.
/// For an m×n input, `Q` is m×p and `R` is p×n with p = min(m, n).
pub fn qr_econ(a: &DMatrix<f64>) -> QrFactors {
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return QrFactors { q: DMatrix::zeros(m, 0), r: DMatrix::zeros(0, n) };
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..p {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    QrFactors { q, r }
}

/// Column-pivoted QR: `A[:, pivots] ≈ Q R` with `Q` m×k, `R` k×n.
#[derive(Clone, Debug)]
pub struct QrcpFactors {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Full column permutation (length n); the first k entries are the
    /// selected pivots.
    pub pivots: Vec<usize>,
}

impl QrcpFactors {
    pub fn rank(&self) -> usize {
        self.r.nrows()
    }
}

/// Householder QR with greedy column pivoting, stopped after `k` steps
/// (`None` runs to min(m, n)). Ties pick the lowest column index. The
/// diagonal of `R` is nonnegative and nonincreasing.
pub fn qrcp(a: &DMatrix<f64>, k: Option<usize>) -> QrcpFactors {
    let (m, n) = a.shape();
    let steps = k.unwrap_or(m.min(n)).min(m.min(n));
    let mut w = a.clone();
    let mut pivots: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| w.column(j).norm_squared()).collect();
    let mut reference = norms.clone();
    let mut reflectors: Vec<(DVector<f64>, f64)> = Vec::with_capacity(steps);

    for i in 0..steps {
        let mut p = i;
        for j in i + 1..n {
            if norms[j] > norms[p] {
                p = j;
            }
        }
        if p != i {
            w.swap_columns(i, p);
            pivots.swap(i, p);
            norms.swap(i, p);
            reference.swap(i, p);
        }

        let x = w.view((i, i), (m - i, 1)).column(0).into_owned();
        let xnorm = x.norm();
        let (v, tau) = if xnorm == 0.0 {
            (DVector::zeros(m - i), 0.0)
        } else {
            let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
            let mut v = x;
            v[0] -= alpha;
            let vnorm_sq = v.norm_squared();
            (v, if vnorm_sq > 0.0 { 2.0 / vnorm_sq } else { 0.0 })
        };
        if tau != 0.0 {
            for j in i..n {
                let mut col = w.view_mut((i, j), (m - i, 1));
                let s = tau * v.dot(&col.column(0));
                col.column_mut(0).axpy(-s, &v, 1.0);
            }
        }
        for j in i + 1..n {
            let rij = w[(i, j)];
            norms[j] -= rij * rij;
            if norms[j] <= 1e-10 * reference[j] {
                let tail = if i + 1 < m { w.view((i + 1, j), (m - i - 1, 1)).norm_squared() } else { 0.0 };
                norms[j] = tail;
                reference[j] = tail;
            }
        }
        reflectors.push((v, tau));
    }

    let mut r = DMatrix::zeros(steps, n);
    for i in 0..steps {
        for j in i..n {
            r[(i, j)] = w[(i, j)];
        }
    }
    let mut q = DMatrix::<f64>::identity(m, steps);
    for (i, (v, tau)) in reflectors.iter().enumerate().rev() {
        if *tau == 0.0 {
            continue;
        }
        for j in 0..steps {
            let mut col = q.view_mut((i, j), (m - i, 1));
            let s = tau * v.dot(&col.column(0));
            col.column_mut(0).axpy(-s, v, 1.0);
        }
    }
    for i in 0..steps {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    QrcpFactors { q, r, pivots }
}

/// Upper Cholesky factor `R` with `RᵀR = A`. Only the upper triangle of `A`
/// is read. Fails at the first non-positive pivot.
pub fn chol(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!("chol of {}x{} matrix", n, a.ncols())));
    }
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= r[(k, j)] * r[(k, j)];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: s });
        }
        let d = s.sqrt();
        r[(j, j)] = d;
        for i in j + 1..n {
            let mut t = a[(j, i)];
            for k in 0..j {
                t -= r[(k, j)] * r[(k, i)];
            }
            r[(j, i)] = t / d;
        }
    }
    Ok(r)
}

/// Thin SVD `A = U diag(σ) Vᵀ` with σ sorted nonincreasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    /// Keep the leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdFactors {
        let r = r.min(self.sigma.len());
        SvdFactors {
            u: self.u.columns(0, r).into_owned(),
            sigma: self.sigma.rows(0, r).into_owned(),
            v: self.v.columns(0, r).into_owned(),
        }
    }
}

pub fn svd(a: &DMatrix<f64>) -> SvdFactors {
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return SvdFactors { u: DMatrix::zeros(m, 0), sigma: DVector::zeros(0), v: DMatrix::zeros(n, 0) };
    }
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("left singular vectors requested");
    let vt = dec.v_t.expect("right singular vectors requested");
    let s = dec.singular_values;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let mut uo = DMatrix::zeros(m, p);
    let mut vo = DMatrix::zeros(n, p);
    let mut so = DVector::zeros(p);
    for (dst, &src) in order.iter().enumerate() {
        uo.set_column(dst, &u.column(src));
        vo.set_column(dst, &vt.row(src).transpose());
        so[dst] = s[src];
    }
    SvdFactors { u: uo, sigma: so, v: vo }
}

/// Symmetric eigendecomposition with eigenvalues ascending.
pub fn eigh(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let dec = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[i].total_cmp(&dec.eigenvalues[j]));
    let mut vals = DVector::zeros(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = dec.eigenvalues[src];
        vecs.set_column(dst, &dec.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Truncation threshold `max(d, n)·ε·σ₁` for a d×n matrix.
pub fn rank_tol(sigma_max: f64, d: usize, n: usize) -> f64 {
    d.max(n) as f64 * f64::EPSILON * sigma_max
}

/// Number of singular values above [`rank_tol`].
pub fn numerical_rank(sigma: &DVector<f64>, d: usize, n: usize) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let tol = rank_tol(sigma[0], d, n);
    sigma.iter().take_while(|&&s| s > tol && s > 0.0).count()
}

/// Orthonormal basis for the numerical range of `A` (rank-revealing, via SVD).
pub fn orth(a: &DMatrix<f64>) -> DMatrix<f64> {
    let f = svd(a);
    let r = numerical_rank(&f.sigma, a.nrows(), a.ncols());
    f.u.columns(0, r).into_owned()
}

/// Moore–Penrose pseudoinverse with the standard numerical-rank cutoff.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let f = svd(a);
    let r = numerical_rank(&f.sigma, a.nrows(), a.ncols());
    let mut vs = f.v.columns(0, r).into_owned();
    for j in 0..r {
        vs.column_mut(j).scale_mut(1.0 / f.sigma[j]);
    }
    vs * f.u.columns(0, r).transpose()
}

/// Minimum-norm least-squares solution `A†b`.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let f = svd(a);
    let r = numerical_rank(&f.sigma, a.nrows(), a.ncols());
    let mut coef = f.u.columns(0, r).tr_mul(b);
    for j in 0..r {
        coef[j] /= f.sigma[j];
    }
    f.v.columns(0, r) * coef
}

/// Solves `R X = B` for upper-triangular `R`.
pub fn solve_upper(r: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_diag(r)?;
    r.solve_upper_triangular(b).ok_or(LinalgError::Singular { index: 0 })
}

/// Solves `Rᵀ X = B` for upper-triangular `R`.
pub fn solve_lower_transposed(r: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_diag(r)?;
    r.tr_solve_upper_triangular(b).ok_or(LinalgError::Singular { index: 0 })
}

pub fn inverse_upper(r: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = r.nrows();
    solve_upper(r, &DMatrix::identity(n, n))
}

fn check_diag(r: &DMatrix<f64>) -> Result<(), LinalgError> {
    if r.nrows() != r.ncols() {
        return Err(LinalgError::Dimension(format!("triangular solve with {}x{} factor", r.nrows(), r.ncols())));
    }
    match (0..r.nrows()).find(|&i| r[(i, i)] == 0.0 || !r[(i, i)].is_finite()) {
        Some(index) => Err(LinalgError::Singular { index }),
        None => Ok(()),
    }
}
