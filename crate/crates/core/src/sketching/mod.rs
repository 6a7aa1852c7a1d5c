//! Data-oblivious sketching operators and sketch-quality diagnostics.
//!
//! Every operator is stored in its wide form (d ≤ m for all families except
//! dense tall operators) and applied from either side. Tall operators are
//! obtained with [`Transposed`].

mod dense;
mod rowsample;
mod saso;
mod srft;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detkernels::svd;
use crate::rng::RngKey;

pub use dense::{sample_dense, DenseFamily, DenseSketchOp, Orientation};
pub use rowsample::{sample_row_sampler, RowSampleOp};
pub use saso::{sample_saso, Saso, SasoLayout, SasoMethod};
pub use srft::{fwht, sample_srft, SrftOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("basis is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A d×m linear map used to compress one dimension of a matrix.
pub trait SketchOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `S·A`, where `A` has `ncols()` rows.
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64>;
    /// `A·S`, where `A` has `nrows()` columns.
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64>;
    fn to_dense(&self) -> DMatrix<f64> {
        self.apply_left(&DMatrix::identity(self.ncols(), self.ncols()))
    }
    /// JSON-serializable description, if the operator can be rebuilt from one.
    fn descriptor(&self) -> Option<SketchDescriptor> {
        None
    }
}

/// Applies `S` from the requested side, checking dimensions.
pub fn apply(s: &dyn SketchOperator, a: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>, SketchError> {
    match side {
        Side::Left if a.nrows() == s.ncols() => Ok(s.apply_left(a)),
        Side::Right if a.ncols() == s.nrows() => Ok(s.apply_right(a)),
        _ => Err(SketchError::Dimension(format!(
            "{}x{} operator applied on the {:?} of a {}x{} matrix",
            s.nrows(),
            s.ncols(),
            side,
            a.nrows(),
            a.ncols()
        ))),
    }
}

impl<T: SketchOperator + ?Sized> SketchOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_left(a)
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        (**self).apply_right(a)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        (**self).to_dense()
    }
    fn descriptor(&self) -> Option<SketchDescriptor> {
        (**self).descriptor()
    }
}

impl SketchOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self * a
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a * self
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Transpose view: the tall counterpart of a wide operator.
pub struct Transposed<'a>(pub &'a dyn SketchOperator);

impl SketchOperator for Transposed<'_> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }
    fn ncols(&self) -> usize {
        self.0.nrows()
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_right(&a.transpose()).transpose()
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.0.apply_left(&a.transpose()).transpose()
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.0.to_dense().transpose()
    }
}

/// `t·S`.
pub struct ScaledSketch<'a> {
    pub inner: &'a dyn SketchOperator,
    pub scale: f64,
}

impl SketchOperator for ScaledSketch<'_> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_left(a) * self.scale
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.apply_right(a) * self.scale
    }
}

/// Block-diagonal `diag(S, I_p)`, used for regularized (augmented) sketches.
pub struct AugmentedSketch<'a> {
    pub inner: &'a dyn SketchOperator,
    pub identity: usize,
}

impl SketchOperator for AugmentedSketch<'_> {
    fn nrows(&self) -> usize {
        self.inner.nrows() + self.identity
    }
    fn ncols(&self) -> usize {
        self.inner.ncols() + self.identity
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, p) = (self.inner.ncols(), self.identity);
        let top = self.inner.apply_left(&a.rows(0, m).into_owned());
        let mut out = DMatrix::zeros(top.nrows() + p, a.ncols());
        out.rows_mut(0, top.nrows()).copy_from(&top);
        out.rows_mut(top.nrows(), p).copy_from(&a.rows(m, p));
        out
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let (d, p) = (self.inner.nrows(), self.identity);
        let left = self.inner.apply_right(&a.columns(0, d).into_owned());
        let mut out = DMatrix::zeros(a.nrows(), left.ncols() + p);
        out.columns_mut(0, left.ncols()).copy_from(&left);
        out.columns_mut(left.ncols(), p).copy_from(&a.columns(d, p));
        out
    }
}

/// Serializable operator description; dense data is never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchDescriptor {
    pub family: String,
    pub d: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: RngKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<SasoMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl SketchDescriptor {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SketchError> {
        serde_json::from_str(text).map_err(|e| SketchError::Invalid(e.to_string()))
    }

    /// Rebuilds the operator. Row samplers cannot be rebuilt (their
    /// distribution is not part of the descriptor).
    pub fn build(&self) -> Result<SketchOp, SketchError> {
        let op = match self.family.as_str() {
            "saso" => SketchOp::Saso(sample_saso(
                self.d,
                self.m,
                self.k.unwrap_or(DEFAULT_SASO_K),
                self.seed,
                self.method.unwrap_or_default(),
            )?),
            "srft" => SketchOp::Srft(sample_srft(self.d, self.m, self.seed)?),
            name => {
                let family = DenseFamily::from_name(name)
                    .ok_or_else(|| SketchError::Invalid(format!("unknown sketch family {name:?}")))?;
                let orientation = self.orientation.unwrap_or_else(|| Orientation::infer(self.d, self.m));
                let mut op = DenseSketchOp::sample(family, self.d, self.m, self.seed, orientation)?;
                if let Some(s) = self.scale {
                    op = op.with_scale(s);
                }
                SketchOp::Dense(op)
            }
        };
        Ok(op)
    }
}

pub const DEFAULT_SASO_K: usize = 8;

/// Sketch family selector used by the drivers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SketchFamily {
    Gaussian,
    Rademacher,
    Uniform,
    Haar,
    Saso {
        #[serde(default = "default_saso_k")]
        k: usize,
    },
    Srft,
}

fn default_saso_k() -> usize {
    DEFAULT_SASO_K
}

impl Default for SketchFamily {
    fn default() -> Self {
        SketchFamily::Saso { k: DEFAULT_SASO_K }
    }
}

impl SketchFamily {
    /// A wide d×m operator (d ≤ m). SASO nonzeros per column are capped at d.
    pub fn sample_wide(&self, d: usize, m: usize, key: RngKey) -> Result<SketchOp, SketchError> {
        Ok(match *self {
            SketchFamily::Gaussian => {
                SketchOp::Dense(DenseSketchOp::sample(DenseFamily::Gaussian, d, m, key, Orientation::Wide)?)
            }
            SketchFamily::Rademacher => {
                SketchOp::Dense(DenseSketchOp::sample(DenseFamily::Rademacher, d, m, key, Orientation::Wide)?)
            }
            SketchFamily::Uniform => {
                SketchOp::Dense(DenseSketchOp::sample(DenseFamily::Uniform, d, m, key, Orientation::Wide)?)
            }
            SketchFamily::Haar => {
                SketchOp::Dense(DenseSketchOp::sample(DenseFamily::Haar, d, m, key, Orientation::Wide)?)
            }
            SketchFamily::Saso { k } => SketchOp::Saso(sample_saso(d, m, k.min(d), key, SasoMethod::ReplacementFree)?),
            SketchFamily::Srft => SketchOp::Srft(sample_srft(d, m, key)?),
        })
    }

    /// Whether entries have unit variance (dense families), as opposed to an
    /// operator that is already isotropic (`E[SᵀS] = I`).
    pub fn dense_unit_variance(&self) -> bool {
        matches!(self, SketchFamily::Gaussian | SketchFamily::Rademacher | SketchFamily::Uniform)
    }

    /// Samples a wide operator scaled so that `E[SᵀS] = I`.
    pub fn sample_isotropic(&self, d: usize, m: usize, key: RngKey) -> Result<SketchOp, SketchError> {
        let op = self.sample_wide(d, m, key)?;
        Ok(match op {
            SketchOp::Dense(dop) if self.dense_unit_variance() => {
                SketchOp::Dense(dop.with_scale(1.0 / (d as f64).sqrt()))
            }
            other => other,
        })
    }
}

/// Tagged union over the concrete operator families.
#[derive(Clone, Debug)]
pub enum SketchOp {
    Dense(DenseSketchOp),
    Saso(Saso),
    RowSample(RowSampleOp),
    Srft(SrftOp),
}

impl SketchOp {
    fn inner(&self) -> &dyn SketchOperator {
        match self {
            SketchOp::Dense(s) => s,
            SketchOp::Saso(s) => s,
            SketchOp::RowSample(s) => s,
            SketchOp::Srft(s) => s,
        }
    }
}

impl SketchOperator for SketchOp {
    fn nrows(&self) -> usize {
        self.inner().nrows()
    }
    fn ncols(&self) -> usize {
        self.inner().ncols()
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner().apply_left(a)
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner().apply_right(a)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.inner().to_dense()
    }
    fn descriptor(&self) -> Option<SketchDescriptor> {
        self.inner().descriptor()
    }
}

/// Restricted singular values of a sketch on a subspace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub cond: f64,
    pub eff_distortion: f64,
}

/// Extreme singular values of `S·U` for a column-orthonormal `U`, the
/// restricted condition number κ and the effective distortion (κ−1)/(κ+1).
pub fn distortion_diagnostics(s: &dyn SketchOperator, u: &DMatrix<f64>) -> Result<DistortionReport, SketchError> {
    if u.nrows() != s.ncols() {
        return Err(SketchError::Dimension(format!(
            "basis has {} rows, operator has {} columns",
            u.nrows(),
            s.ncols()
        )));
    }
    let n = u.ncols();
    let gram = u.tr_mul(u) - DMatrix::<f64>::identity(n, n);
    let dev = gram.amax();
    if dev > 1e-8 {
        return Err(SketchError::NotOrthonormal(dev));
    }
    let su = s.apply_left(u);
    let f = svd(&su);
    let sigma_max = if f.sigma.is_empty() { 0.0 } else { f.sigma[0] };
    let mut sigma_min = if f.sigma.len() < n { 0.0 } else { f.sigma[n - 1] };
    if sigma_min <= crate::detkernels::rank_tol(sigma_max, su.nrows(), n) {
        sigma_min = 0.0;
    }
    let (cond, eff_distortion) = if sigma_min == 0.0 {
        (f64::INFINITY, 1.0)
    } else {
        (sigma_max / sigma_min, (sigma_max - sigma_min) / (sigma_max + sigma_min))
    };
    Ok(DistortionReport { sigma_max, sigma_min, cond, eff_distortion })
}
