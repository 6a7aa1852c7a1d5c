use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::rng::{gaussian_stream, RngKey};

/// A matrix known only through products with it and its transpose.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;

    /// `A·X` for a block of vectors. Counts as one pass over `A`.
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), x.ncols());
        for j in 0..x.ncols() {
            out.set_column(j, &self.apply(&x.column(j).into_owned()));
        }
        out
    }

    /// `Aᵀ·Y` for a block of vectors. Counts as one pass over `A`.
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols(), y.ncols());
        for j in 0..y.ncols() {
            out.set_column(j, &self.apply_adjoint(&y.column(j).into_owned()));
        }
        out
    }

    /// ‖A‖_F². The default probes with the identity; dense matrices override.
    fn frobenius_norm_sq(&self) -> f64 {
        self.apply_mat(&DMatrix::identity(self.ncols(), self.ncols())).norm_squared()
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(y)
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
    fn frobenius_norm_sq(&self) -> f64 {
        self.norm_squared()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        (**self).apply_adjoint(y)
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_mat(x)
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_adjoint_mat(y)
    }
    fn frobenius_norm_sq(&self) -> f64 {
        (**self).frobenius_norm_sq()
    }
}

/// Operator defined by a pair of closures.
pub struct FnOperator<F, G> {
    nrows: usize,
    ncols: usize,
    forward: F,
    adjoint: G,
}

impl<F, G> FnOperator<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    pub fn new(nrows: usize, ncols: usize, forward: F, adjoint: G) -> Self {
        Self { nrows, ncols, forward, adjoint }
    }
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Sync,
{
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.forward)(x)
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        (self.adjoint)(y)
    }
}

pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        y.clone()
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone()
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        y.clone()
    }
    fn frobenius_norm_sq(&self) -> f64 {
        self.0 as f64
    }
}

/// The composition `A·B`, never formed explicitly.
pub struct ProductOperator<A, B> {
    pub left: A,
    pub right: B,
}

impl<A: LinearOperator, B: LinearOperator> ProductOperator<A, B> {
    pub fn new(left: A, right: B) -> Self {
        assert_eq!(left.ncols(), right.nrows(), "product operator dimension mismatch");
        Self { left, right }
    }
}

impl<A: LinearOperator, B: LinearOperator> LinearOperator for ProductOperator<A, B> {
    fn nrows(&self) -> usize {
        self.left.nrows()
    }
    fn ncols(&self) -> usize {
        self.right.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.left.apply(&self.right.apply(x))
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.right.apply_adjoint(&self.left.apply_adjoint(y))
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.left.apply_mat(&self.right.apply_mat(x))
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.right.apply_adjoint_mat(&self.left.apply_adjoint_mat(y))
    }
}

/// `Aᵀ` as an operator.
pub struct AdjointOperator<A>(pub A);

impl<A: LinearOperator> LinearOperator for AdjointOperator<A> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }
    fn ncols(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.apply_adjoint(x)
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.apply(y)
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_adjoint_mat(x)
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_mat(y)
    }
    fn frobenius_norm_sq(&self) -> f64 {
        self.0.frobenius_norm_sq()
    }
}

/// `t·A`.
pub struct ScaledOperator<A> {
    pub inner: A,
    pub scale: f64,
}

impl<A: LinearOperator> LinearOperator for ScaledOperator<A> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(x) * self.scale
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.inner.apply_adjoint(y) * self.scale
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_mat(x) * self.scale
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_adjoint_mat(y) * self.scale
    }
    fn frobenius_norm_sq(&self) -> f64 {
        self.inner.frobenius_norm_sq() * self.scale * self.scale
    }
}

/// Wraps an operator and counts passes: every vector or block product with
/// `A` or `Aᵀ` counts once. Norm queries are not counted.
pub struct CountingOperator<A> {
    inner: A,
    forward: AtomicUsize,
    adjoint: AtomicUsize,
}

impl<A: LinearOperator> CountingOperator<A> {
    pub fn new(inner: A) -> Self {
        Self { inner, forward: AtomicUsize::new(0), adjoint: AtomicUsize::new(0) }
    }
    pub fn forward_count(&self) -> usize {
        self.forward.load(Ordering::Relaxed)
    }
    pub fn adjoint_count(&self) -> usize {
        self.adjoint.load(Ordering::Relaxed)
    }
    pub fn total(&self) -> usize {
        self.forward_count() + self.adjoint_count()
    }
}

impl<A: LinearOperator> LinearOperator for CountingOperator<A> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint(y)
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_mat(x)
    }
    fn apply_adjoint_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint_mat(y)
    }
    fn frobenius_norm_sq(&self) -> f64 {
        self.inner.frobenius_norm_sq()
    }
}

/// Largest relative gap |⟨Av, w⟩ − ⟨v, Aᵀw⟩| / (‖Av‖‖w‖ + ‖v‖‖Aᵀw‖) over
/// `probes` Gaussian probe pairs.
pub fn check_adjoint(op: &dyn LinearOperator, probes: usize, key: RngKey) -> f64 {
    let (m, n) = (op.nrows(), op.ncols());
    let mut worst: f64 = 0.0;
    for p in 0..probes {
        let k = key.derive(p as u64);
        let v = DVector::from_vec(gaussian_stream(k, n));
        let w = DVector::from_vec(gaussian_stream(k.shifted(n as u64), m));
        let av = op.apply(&v);
        let atw = op.apply_adjoint(&w);
        let scale = av.norm() * w.norm() + v.norm() * atw.norm();
        if scale > 0.0 {
            worst = worst.max((av.dot(&w) - v.dot(&atw)).abs() / scale);
        }
    }
    worst
}
