//! Leverage scores: exact, fast sketched approximations, rank-k subspace
//! scores, and the sampling distributions they induce.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{numerical_rank, orth, svd, LinearOperator};
use crate::lowrank::{qb1, LowRankError, PowerConfig};
use crate::rng::{gaussian_stream, RngKey};
use crate::sketching::{sample_srft, SketchError, SketchOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LeverageError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    LowRank(#[from] LowRankError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverageKind {
    Standard,
    RankK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeverageScores {
    pub scores: Vec<f64>,
    pub kind: LeverageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl LeverageScores {
    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// m·max ℓᵢ.
    pub fn coherence(&self) -> f64 {
        self.scores.len() as f64 * self.scores.iter().copied().fold(0.0, f64::max)
    }
}

fn row_norms_sq(u: &DMatrix<f64>) -> Vec<f64> {
    u.row_iter().map(|r| r.norm_squared()).collect()
}

/// Squared row norms of an orthonormal basis for range(A).
pub fn exact_leverage(a: &DMatrix<f64>) -> Result<LeverageScores, LeverageError> {
    if a.nrows() < a.ncols() {
        return Err(LeverageError::Invalid(format!("exact leverage needs m >= n, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(LeverageScores { scores: row_norms_sq(&orth(a)), kind: LeverageKind::Standard, k: None })
}

/// The second, dimension-reducing sketch in [`approx_leverage_staged`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondStage {
    /// Gaussian with `d2` columns, scaled by 1/√d2.
    Gaussian(usize),
    /// No second sketch; the output differs from the exact scores only
    /// through the first-stage preconditioner.
    Identity,
}

/// Default second-stage width ⌈8 ln m⌉.
pub fn default_d2(m: usize) -> usize {
    (8.0 * (m.max(2) as f64).ln()).ceil() as usize
}

/// Two-sketch leverage approximation with an SRFT of `d1` rows and a
/// Gaussian of `d2` columns. Reads `A` exactly twice.
pub fn approx_leverage(
    a: &dyn LinearOperator,
    d1: usize,
    d2: usize,
    seed: RngKey,
) -> Result<LeverageScores, LeverageError> {
    if d2 == 0 {
        return Err(LeverageError::Invalid("d2 must be at least 1".into()));
    }
    approx_leverage_staged(a, d1, SecondStage::Gaussian(d2), seed)
}

pub fn approx_leverage_staged(
    a: &dyn LinearOperator,
    d1: usize,
    stage: SecondStage,
    seed: RngKey,
) -> Result<LeverageScores, LeverageError> {
    let (m, n) = (a.nrows(), a.ncols());
    if d1 < n || d1 > m {
        return Err(LeverageError::Invalid(format!("d1 = {d1} must lie in {n}..={m}")));
    }
    let s1 = sample_srft(d1, m, seed.derive(1))?;
    // S₁A computed as (AᵀS₁ᵀ)ᵀ so that the operator sees one adjoint pass.
    let s1t = s1.apply_right(&DMatrix::identity(d1, d1)).transpose();
    let sa = a.apply_adjoint_mat(&s1t).transpose();
    let f = svd(&sa);
    let r = numerical_rank(&f.sigma, d1, n);
    if r < n {
        warn!("approx_leverage: sketched matrix has numerical rank {r} < {n}; using its truncated pseudoinverse");
    }
    let mut w = f.v.columns(0, r).into_owned();
    for j in 0..r {
        w.column_mut(j).scale_mut(1.0 / f.sigma[j]);
    }
    let w = match stage {
        SecondStage::Identity => w,
        SecondStage::Gaussian(d2) => {
            let g = DMatrix::from_vec(r, d2, gaussian_stream(seed.derive(2), r * d2)) / (d2 as f64).sqrt();
            w * g
        }
    };
    let y = a.apply_mat(&w);
    Ok(LeverageScores { scores: row_norms_sq(&y), kind: LeverageKind::Standard, k: None })
}

/// Rank-k leverage scores from a QB approximation of rank `k + s`.
pub fn subspace_leverage(
    a: &dyn LinearOperator,
    k: usize,
    oversample: usize,
    cfg: &PowerConfig,
    seed: RngKey,
) -> Result<LeverageScores, LeverageError> {
    let qb = qb1(a, k + oversample, cfg, seed)?;
    let f = svd(&qb.b);
    let r = k.min(f.sigma.len());
    let basis = &qb.q * f.u.columns(0, r);
    Ok(LeverageScores { scores: row_norms_sq(&basis), kind: LeverageKind::RankK, k: Some(k) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    pub probs: Vec<f64>,
}

/// `pᵢ = ℓᵢ / Σ ℓⱼ`.
pub fn leverage_distribution(scores: &[f64]) -> Result<SamplingDistribution, LeverageError> {
    if let Some(bad) = scores.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(LeverageError::Invalid(format!("leverage scores must be finite and nonnegative, found {bad}")));
    }
    let total: f64 = scores.iter().sum();
    if total == 0.0 {
        return Err(LeverageError::Invalid("all leverage scores are zero".into()));
    }
    Ok(SamplingDistribution { probs: scores.iter().map(|s| s / total).collect() })
}
