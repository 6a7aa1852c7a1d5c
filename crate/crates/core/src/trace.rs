//! Stochastic trace estimation for implicit operators: Girard–Hutchinson,
//! Hutch++, and stochastic Lanczos quadrature for `tr f(B)`.
//!
//! Probe `i` draws from `seed.derive(i)`, so results do not depend on the
//! order in which probes are evaluated.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::{eigh, lanczos_tridiag, orth, LinalgError, LinearOperator, Reorth};
use crate::rng::{gaussian_stream, rademacher_stream, RngKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("{function} is undefined at quadrature node {node:e}")]
    Domain { function: String, node: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeDistribution {
    #[default]
    Rademacher,
    Gaussian,
    /// Uniform on the sphere of radius √n.
    Sphere,
}

/// An isotropic probe vector (`E[ωωᵀ] = I`).
pub fn probe(dist: ProbeDistribution, n: usize, key: RngKey) -> DVector<f64> {
    match dist {
        ProbeDistribution::Rademacher => DVector::from_vec(rademacher_stream(key, n)),
        ProbeDistribution::Gaussian => DVector::from_vec(gaussian_stream(key, n)),
        ProbeDistribution::Sphere => {
            let g = DVector::from_vec(gaussian_stream(key, n));
            let norm = g.norm();
            if norm == 0.0 {
                g
            } else {
                g * ((n as f64).sqrt() / norm)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEstimate {
    pub value: f64,
    pub samples: Vec<f64>,
    /// Unbiased sample variance (zero with fewer than two samples).
    pub sample_variance: f64,
    pub probes_used: usize,
}

impl TraceEstimate {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let count = samples.len();
        let value = if count == 0 { 0.0 } else { samples.iter().sum::<f64>() / count as f64 };
        let sample_variance =
            if count < 2 { 0.0 } else { samples.iter().map(|s| (s - value).powi(2)).sum::<f64>() / (count - 1) as f64 };
        Self { value, samples, sample_variance, probes_used: count }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.probes_used == 0 {
            0.0
        } else {
            (self.sample_variance / self.probes_used as f64).sqrt()
        }
    }
}

fn check_square(a: &dyn LinearOperator) -> Result<usize, TraceError> {
    if a.nrows() != a.ncols() {
        return Err(TraceError::Invalid(format!("trace of a {}x{} operator", a.nrows(), a.ncols())));
    }
    Ok(a.ncols())
}

/// Girard–Hutchinson: the mean of `ωᵢᵀ A ωᵢ` over `m` probes.
pub fn girard_hutchinson(
    a: &dyn LinearOperator,
    m: usize,
    dist: ProbeDistribution,
    seed: RngKey,
) -> Result<TraceEstimate, TraceError> {
    let n = check_square(a)?;
    if m == 0 {
        return Err(TraceError::Invalid("at least one probe is required".into()));
    }
    let samples: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let w = probe(dist, n, seed.derive(i as u64));
            w.dot(&a.apply(&w))
        })
        .collect();
    Ok(TraceEstimate::from_samples(samples))
}

/// Hutch++ with the default budget: a third of the `m` products sketches
/// the range, a third multiplies the basis, the rest are deflated probes.
pub fn hutch_pp(a: &dyn LinearOperator, m: usize, seed: RngKey) -> Result<TraceEstimate, TraceError> {
    if m < 6 {
        return Err(TraceError::Invalid(format!("Hutch++ needs a budget of at least 6 products, got {m}")));
    }
    let sketch = m / 3;
    hutch_pp_split(a, sketch, m - 2 * sketch, seed)
}

/// Hutch++ with an explicit split: `Q = orth(A S)` with `sketch_cols`
/// Rademacher columns, then `probes` Girard–Hutchinson samples of the
/// deflated operator `(I − QQᵀ) A (I − QQᵀ)`. Each sample is
/// `tr(QᵀAQ) + ωᵀΔω`.
pub fn hutch_pp_split(
    a: &dyn LinearOperator,
    sketch_cols: usize,
    probes: usize,
    seed: RngKey,
) -> Result<TraceEstimate, TraceError> {
    let n = check_square(a)?;
    if sketch_cols == 0 || probes == 0 {
        return Err(TraceError::Invalid("Hutch++ needs at least one sketch column and one probe".into()));
    }
    let s = DMatrix::from_vec(n, sketch_cols, rademacher_stream(seed.derive(0), n * sketch_cols));
    let q = orth(&a.apply_mat(&s));
    let head = if q.ncols() == 0 { 0.0 } else { q.tr_mul(&a.apply_mat(&q)).trace() };
    let samples: Vec<f64> = (0..probes)
        .into_par_iter()
        .map(|i| {
            let w = probe(ProbeDistribution::Rademacher, n, seed.derive(1 + i as u64));
            let w = &w - &q * q.tr_mul(&w);
            head + w.dot(&a.apply(&w))
        })
        .collect();
    Ok(TraceEstimate::from_samples(samples))
}

/// Scalar function applied to the spectrum in [`slq`].
#[derive(Clone)]
pub enum SpectralFunction {
    Identity,
    Exp,
    Log1p,
    /// `1/(θ + μ)`.
    InvShift(f64),
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for SpectralFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "{}", self.name())
    }
}

impl SpectralFunction {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SpectralFunction::Custom { name: name.into(), f: Arc::new(f) }
    }

    pub fn name(&self) -> String {
        match self {
            SpectralFunction::Identity => "identity".into(),
            SpectralFunction::Exp => "exp".into(),
            SpectralFunction::Log1p => "log1p".into(),
            SpectralFunction::InvShift(mu) => format!("inv_shift({mu})"),
            SpectralFunction::Custom { name, .. } => name.clone(),
        }
    }

    /// Parses `identity`, `exp`, `log1p` or `inv_shift(μ)`.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let t = text.trim();
        match t {
            "identity" => return Ok(SpectralFunction::Identity),
            "exp" => return Ok(SpectralFunction::Exp),
            "log1p" => return Ok(SpectralFunction::Log1p),
            _ => {}
        }
        t.strip_prefix("inv_shift(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|mu| mu.trim().parse::<f64>().ok())
            .map(SpectralFunction::InvShift)
            .ok_or_else(|| TraceError::Invalid(format!("unknown spectral function {t:?}")))
    }

    pub fn eval(&self, x: f64) -> Result<f64, TraceError> {
        let value = match self {
            SpectralFunction::Identity => x,
            SpectralFunction::Exp => x.exp(),
            SpectralFunction::Log1p if x > -1.0 => x.ln_1p(),
            SpectralFunction::InvShift(mu) if x + mu != 0.0 => 1.0 / (x + mu),
            SpectralFunction::Custom { f, .. } => f(x),
            _ => f64::NAN,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(TraceError::Domain { function: self.name(), node: x })
        }
    }
}

/// Gauss quadrature rule for the spectral measure of `B` seen from one probe.
/// Weights sum to ‖probe‖².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn integrate(&self, f: &SpectralFunction) -> Result<f64, TraceError> {
        let mut total = 0.0;
        for (&node, &w) in self.nodes.iter().zip(&self.weights) {
            total += w * f.eval(node)?;
        }
        Ok(total)
    }
}

/// `s`-step Lanczos quadrature rule for `ωᵀ f(B) ω`.
pub fn quadrature_rule(
    b: &dyn LinearOperator,
    omega: &DVector<f64>,
    s: usize,
    reorth: Reorth,
) -> Result<QuadratureRule, TraceError> {
    if s == 0 {
        return Err(TraceError::Invalid("at least one Lanczos step is required".into()));
    }
    let mass = omega.norm_squared();
    if mass == 0.0 {
        return Ok(QuadratureRule { nodes: vec![], weights: vec![] });
    }
    let lz = lanczos_tridiag(b, &(omega / mass.sqrt()), s, reorth)?;
    let (nodes, vecs) = eigh(&lz.jacobi());
    let weights = (0..nodes.len()).map(|l| mass * vecs[(0, l)].powi(2)).collect();
    Ok(QuadratureRule { nodes: nodes.iter().copied().collect(), weights })
}

/// Stochastic Lanczos quadrature estimate of `tr f(B)` for symmetric `B`.
pub fn slq(
    b: &dyn LinearOperator,
    f: &SpectralFunction,
    m: usize,
    s: usize,
    dist: ProbeDistribution,
    seed: RngKey,
    reorth: Reorth,
) -> Result<TraceEstimate, TraceError> {
    let n = check_square(b)?;
    if m == 0 {
        return Err(TraceError::Invalid("at least one probe is required".into()));
    }
    let samples = (0..m)
        .into_par_iter()
        .map(|i| {
            let w = probe(dist, n, seed.derive(i as u64));
            quadrature_rule(b, &w, s, reorth)?.integrate(f)
        })
        .collect::<Result<Vec<f64>, TraceError>>()?;
    Ok(TraceEstimate::from_samples(samples))
}
