use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SketchDescriptor, SketchError, SketchOperator};
use crate::detkernels::qr_econ;
use crate::rng::{gaussian_stream, uniform_stream, RngKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseFamily {
    Gaussian,
    Rademacher,
    /// Uniform on [−√3, √3] (unit variance).
    Uniform,
    Haar,
}

impl DenseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DenseFamily::Gaussian => "gaussian",
            DenseFamily::Rademacher => "rademacher",
            DenseFamily::Uniform => "uniform",
            DenseFamily::Haar => "haar",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(DenseFamily::Gaussian),
            "rademacher" => Some(DenseFamily::Rademacher),
            "uniform" => Some(DenseFamily::Uniform),
            "haar" => Some(DenseFamily::Haar),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Wide,
    Tall,
}

impl Orientation {
    pub fn infer(d: usize, m: usize) -> Self {
        if d <= m {
            Orientation::Wide
        } else {
            Orientation::Tall
        }
    }
}

/// Dense d×m operator. Gaussian, Rademacher and uniform entries have unit
/// variance before `scale` is applied; Haar operators have orthonormal rows
/// (wide) or columns (tall).
#[derive(Clone, Debug)]
pub struct DenseSketchOp {
    pub family: DenseFamily,
    pub d: usize,
    pub m: usize,
    pub seed: RngKey,
    pub orientation: Orientation,
    pub scale: f64,
    matrix: DMatrix<f64>,
}

/// Samples a dense operator, orienting it by its shape.
pub fn sample_dense(family: DenseFamily, d: usize, m: usize, seed: RngKey) -> Result<DenseSketchOp, SketchError> {
    DenseSketchOp::sample(family, d, m, seed, Orientation::infer(d, m))
}

impl DenseSketchOp {
    pub fn sample(
        family: DenseFamily,
        d: usize,
        m: usize,
        seed: RngKey,
        orientation: Orientation,
    ) -> Result<Self, SketchError> {
        if d == 0 || m == 0 {
            return Err(SketchError::Invalid(format!("sketch dimensions must be positive, got {d}x{m}")));
        }
        match orientation {
            Orientation::Wide if d > m => {
                return Err(SketchError::Invalid(format!("wide operator requires d <= m, got {d}x{m}")))
            }
            Orientation::Tall if d < m => {
                return Err(SketchError::Invalid(format!("tall operator requires d >= m, got {d}x{m}")))
            }
            _ => {}
        }
        let len = d * m;
        let matrix = match family {
            DenseFamily::Gaussian => DMatrix::from_vec(d, m, gaussian_stream(seed, len)),
            DenseFamily::Rademacher => DMatrix::from_vec(
                d,
                m,
                uniform_stream(seed, len).into_iter().map(|u| if u < 0.5 { -1.0 } else { 1.0 }).collect(),
            ),
            DenseFamily::Uniform => {
                let w = 3f64.sqrt();
                DMatrix::from_vec(d, m, uniform_stream(seed, len).into_iter().map(|u| w * (2.0 * u - 1.0)).collect())
            }
            DenseFamily::Haar => {
                let g = DMatrix::from_vec(d, m, gaussian_stream(seed, len));
                match orientation {
                    Orientation::Wide => qr_econ(&g.transpose()).q.transpose(),
                    Orientation::Tall => qr_econ(&g).q,
                }
            }
        };
        Ok(Self { family, d, m, seed, orientation, scale: 1.0, matrix })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.matrix *= scale / self.scale;
        self.scale = scale;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl SketchOperator for DenseSketchOp {
    fn nrows(&self) -> usize {
        self.d
    }
    fn ncols(&self) -> usize {
        self.m
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * a
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a * &self.matrix
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn descriptor(&self) -> Option<SketchDescriptor> {
        Some(SketchDescriptor {
            family: self.family.name().to_string(),
            d: self.d,
            m: self.m,
            k: None,
            seed: self.seed,
            method: None,
            orientation: Some(self.orientation),
            scale: (self.scale != 1.0).then_some(self.scale),
        })
    }
}
