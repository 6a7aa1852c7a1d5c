use nalgebra::DMatrix;

use crate::detkernels::LinearOperator;
use crate::rng::{gaussian_stream, RngKey};

fn probes(n: usize, r: usize, seed: RngKey) -> DMatrix<f64> {
    DMatrix::from_vec(n, r, gaussian_stream(seed, n * r))
}

/// Probabilistic upper bound on ‖A‖₂ from `r` Gaussian probes:
/// β·√(2/π)·max_j ‖A z_j‖. Fails to bound with probability at most β^(−r).
pub fn spectral_bound(a: &dyn LinearOperator, r: usize, beta: f64, seed: RngKey) -> f64 {
    assert!(r >= 1 && beta > 1.0, "spectral_bound needs r >= 1 and beta > 1");
    let az = a.apply_mat(&probes(a.ncols(), r, seed));
    let largest = az.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    beta * (2.0 / std::f64::consts::PI).sqrt() * largest
}

/// Unbiased estimate (1/r)‖AZ‖_F² of ‖A‖_F² with Gaussian `Z`.
pub fn frob_estimate(a: &dyn LinearOperator, r: usize, seed: RngKey) -> f64 {
    assert!(r >= 1, "frob_estimate needs r >= 1");
    a.apply_mat(&probes(a.ncols(), r, seed)).norm_squared() / r as f64
}
