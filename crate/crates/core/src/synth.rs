//! Synthetic test matrices with prescribed singular values and coherence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::qr_econ;
use crate::rng::{gaussian_stream, RngKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("infeasible matrix spec: {0}")]
    Infeasible(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    /// All singular values equal to one.
    Flat,
    /// The leading `r` singular values equal `gap`, the rest one.
    Step { r: usize, gap: f64 },
    /// σ_j = j^(−decay), j = 1, 2, …
    Power { decay: f64 },
    /// σ_j = exp(−decay·(j − 1)).
    Exp { decay: f64 },
}

impl Spectrum {
    /// Exponential decay from 1 down to 1/cond over `p` values.
    pub fn with_condition(cond: f64, p: usize) -> Self {
        let decay = if p > 1 { cond.ln() / (p - 1) as f64 } else { 0.0 };
        Spectrum::Exp { decay }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coherence {
    #[default]
    Incoherent,
    /// The first `rows` rows of the left factor's Gaussian seed are
    /// multiplied by `weight` before orthonormalization, which concentrates
    /// leverage on those rows.
    Spiked { rows: usize, weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub m: usize,
    pub n: usize,
    pub spectrum: Spectrum,
    #[serde(default)]
    pub coherence: Coherence,
    /// Zero out singular values beyond this rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default)]
    pub seed: RngKey,
}

impl MatrixSpec {
    pub fn new(m: usize, n: usize, spectrum: Spectrum, seed: RngKey) -> Self {
        Self { m, n, spectrum, coherence: Coherence::Incoherent, rank: None, seed }
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = Some(rank);
        self
    }

    pub fn with_coherence(mut self, coherence: Coherence) -> Self {
        self.coherence = coherence;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let p = self.m.min(self.n);
        if p == 0 {
            return Err(SynthError::Infeasible(format!("dimensions {}x{}", self.m, self.n)));
        }
        match self.spectrum {
            Spectrum::Step { r, gap } if r > p || !(gap > 0.0) => {
                return Err(SynthError::Infeasible(format!("step(r = {r}, gap = {gap}) on a rank-{p} shape")))
            }
            Spectrum::Power { decay } | Spectrum::Exp { decay } if !decay.is_finite() || decay < 0.0 => {
                return Err(SynthError::Infeasible(format!("decay {decay} must be finite and nonnegative")))
            }
            _ => {}
        }
        if let Some(r) = self.rank {
            if r > p {
                return Err(SynthError::Infeasible(format!("rank {r} exceeds min(m, n) = {p}")));
            }
        }
        if let Coherence::Spiked { rows, weight } = self.coherence {
            if rows > self.m || !(weight > 0.0) {
                return Err(SynthError::Infeasible(format!("spiked(rows = {rows}, weight = {weight})")));
            }
        }
        Ok(())
    }

    /// The prescribed singular values (length min(m, n), nonincreasing).
    pub fn singular_values(&self) -> DVector<f64> {
        let p = self.m.min(self.n);
        let mut s = DVector::from_fn(p, |j, _| match self.spectrum {
            Spectrum::Flat => 1.0,
            Spectrum::Step { r, gap } => {
                if j < r {
                    gap
                } else {
                    1.0
                }
            }
            Spectrum::Power { decay } => ((j + 1) as f64).powf(-decay),
            Spectrum::Exp { decay } => (-decay * j as f64).exp(),
        });
        if let Some(r) = self.rank {
            for j in r..p {
                s[j] = 0.0;
            }
        }
        s
    }
}

/// `(U, σ, V)` with `A = U diag(σ) Vᵀ`.
pub type Factors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

pub fn gen_factors(spec: &MatrixSpec) -> Result<Factors, SynthError> {
    spec.validate()?;
    let p = spec.m.min(spec.n);
    let mut gu = DMatrix::from_vec(spec.m, p, gaussian_stream(spec.seed.derive(1), spec.m * p));
    if let Coherence::Spiked { rows, weight } = spec.coherence {
        for i in 0..rows {
            gu.row_mut(i).scale_mut(weight);
        }
    }
    let gv = DMatrix::from_vec(spec.n, p, gaussian_stream(spec.seed.derive(2), spec.n * p));
    Ok((qr_econ(&gu).q, spec.singular_values(), qr_econ(&gv).q))
}

pub fn gen_matrix(spec: &MatrixSpec) -> Result<DMatrix<f64>, SynthError> {
    let (u, s, v) = gen_factors(spec)?;
    Ok(compose(&u, &s, &v))
}

/// `U diag(σ) Vᵀ`.
pub fn compose(u: &DMatrix<f64>, s: &DVector<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut us = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    us * v.transpose()
}

/// Random orthonormal m×p matrix (orthonormalized Gaussian).
pub fn random_orthonormal(m: usize, p: usize, key: RngKey) -> DMatrix<f64> {
    qr_econ(&DMatrix::from_vec(m, p, gaussian_stream(key, m * p))).q
}

/// Gaussian m×n matrix with unit-variance entries.
pub fn gaussian_matrix(m: usize, n: usize, key: RngKey) -> DMatrix<f64> {
    DMatrix::from_vec(m, n, gaussian_stream(key, m * n))
}

pub fn gaussian_vector(n: usize, key: RngKey) -> DVector<f64> {
    DVector::from_vec(gaussian_stream(key, n))
}

/// Symmetric psd `V diag(λ) Vᵀ` with a random orthonormal `V`.
pub fn psd_with_eigenvalues(lambda: &[f64], key: RngKey) -> DMatrix<f64> {
    let n = lambda.len();
    let v = random_orthonormal(n, n, key);
    let a = compose(&v, &DVector::from_column_slice(lambda), &v);
    (&a + a.transpose()) * 0.5
}
