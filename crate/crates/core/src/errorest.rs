//! Bootstrap a-posteriori error estimates for sketch-and-solve least
//! squares and sketched singular value decompositions.
//!
//! Each replicate resamples the rows of the sketched data with replacement
//! using its own derived key, so replicates can run in parallel without
//! changing the result.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{pinv_solve, svd};
use crate::rng::RngKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BootstrapError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    #[default]
    L2,
    Linf,
}

impl ErrorNorm {
    pub fn of(self, v: &DVector<f64>) -> f64 {
        match self {
            ErrorNorm::L2 => v.norm(),
            ErrorNorm::Linf => v.amax(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub quantile_estimate: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub replicate_errors: Vec<f64>,
}

/// Smallest replicate error `t` with at least a `level` fraction of the
/// errors ≤ `t`.
pub fn empirical_quantile(errors: &[f64], level: f64) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // The small offset keeps exact products such as 0.9·200 from rounding up.
    let rank = ((level * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[rank - 1]
}

impl BootstrapResult {
    fn new(errors: Vec<f64>, alpha: f64) -> Self {
        Self {
            quantile_estimate: empirical_quantile(&errors, 1.0 - alpha),
            alpha,
            replicates: errors.len(),
            replicate_errors: errors,
        }
    }

    /// The quantile at another level, from the same replicates.
    pub fn quantile(&self, level: f64) -> f64 {
        empirical_quantile(&self.replicate_errors, level)
    }
}

fn check(d: usize, replicates: usize, alpha: f64) -> Result<(), BootstrapError> {
    if d == 0 || replicates == 0 {
        return Err(BootstrapError::Invalid("need at least one row and one replicate".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BootstrapError::Invalid(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Row indices drawn uniformly with replacement.
fn resample_rows(d: usize, key: RngKey) -> Vec<usize> {
    let mut stream = key.stream();
    (0..d).map(|_| stream.next_index(d)).collect()
}

fn gather(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Bootstrap quantile of ‖x̃ − x̂‖ for a sketch-and-solve least squares
/// solution `x̂` of `Â x ≈ b̂`.
pub fn bootstrap_ls(
    a_hat: &DMatrix<f64>,
    b_hat: &DVector<f64>,
    x_hat: &DVector<f64>,
    replicates: usize,
    alpha: f64,
    norm: ErrorNorm,
    seed: RngKey,
) -> Result<BootstrapResult, BootstrapError> {
    let (d, n) = a_hat.shape();
    check(d, replicates, alpha)?;
    if d < n || b_hat.len() != d || x_hat.len() != n {
        return Err(BootstrapError::Invalid(format!(
            "shapes: A {d}x{n}, b {}, x {}; need d >= n",
            b_hat.len(),
            x_hat.len()
        )));
    }
    let errors: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rows = resample_rows(d, seed.derive(r as u64));
            let a = gather(a_hat, &rows);
            let b = DVector::from_fn(d, |i, _| b_hat[rows[i]]);
            norm.of(&(pinv_solve(&a, &b) - x_hat))
        })
        .collect();
    Ok(BootstrapResult::new(errors, alpha))
}

/// Sign-invariant distance min(‖u − v‖, ‖u + v‖).
pub fn sign_invariant_distance(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u - v).norm().min((u + v).norm())
}

/// Bootstrap quantiles for the leading `k` singular values (max absolute
/// deviation) and right singular vectors (max sign-invariant distance) of
/// a sketch `Â`. A singular value missing from a rank-deficient resample
/// counts as zero, and its vector as the zero vector.
pub fn bootstrap_svd(
    a_hat: &DMatrix<f64>,
    k: usize,
    replicates: usize,
    alpha: f64,
    seed: RngKey,
) -> Result<(BootstrapResult, BootstrapResult), BootstrapError> {
    let (d, n) = a_hat.shape();
    check(d, replicates, alpha)?;
    if k == 0 || k > d.min(n) {
        return Err(BootstrapError::Invalid(format!("k = {k} must lie in 1..={}", d.min(n))));
    }
    let reference = svd(a_hat);
    let pairs: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rows = resample_rows(d, seed.derive(r as u64));
            let f = svd(&gather(a_hat, &rows));
            let mut e_sigma: f64 = 0.0;
            let mut e_v: f64 = 0.0;
            for j in 0..k {
                let sigma = f.sigma.get(j).copied().unwrap_or(0.0);
                e_sigma = e_sigma.max((sigma - reference.sigma[j]).abs());
                let v_ref = reference.v.column(j).into_owned();
                let v = if j < f.v.ncols() { f.v.column(j).into_owned() } else { DVector::zeros(n) };
                e_v = e_v.max(sign_invariant_distance(&v, &v_ref));
            }
            (e_sigma, e_v)
        })
        .collect();
    let (sigma_errors, v_errors) = pairs.into_iter().unzip();
    Ok((BootstrapResult::new(sigma_errors, alpha), BootstrapResult::new(v_errors, alpha)))
}
