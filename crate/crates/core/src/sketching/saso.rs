use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SketchDescriptor, SketchError, SketchOperator};
use crate::rng::RngKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SasoMethod {
    /// k distinct row indices per column via a partial Fisher–Yates shuffle.
    #[default]
    ReplacementFree,
    /// One index per contiguous block; blocks are the balanced partition of
    /// the d rows into k pieces.
    Blocked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SasoLayout {
    Csc,
    Csr,
}

/// Short-axis-sparse operator of shape d×m (wide): each of the m columns
/// holds exactly k nonzeros equal to ±1/√k.
#[derive(Clone, Debug)]
pub struct Saso {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub seed: RngKey,
    pub method: SasoMethod,
    /// Row index of nonzero `t` of column `j` at position `j*k + t` (CSC with
    /// implicit column pointers).
    rows: Vec<usize>,
    values: Vec<f64>,
}

/// Compressed-sparse-row copy of a SASO.
#[derive(Clone, Debug)]
pub struct SasoCsr {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn sample_saso(d: usize, m: usize, k: usize, seed: RngKey, method: SasoMethod) -> Result<Saso, SketchError> {
    if d == 0 || m == 0 {
        return Err(SketchError::Invalid(format!("sketch dimensions must be positive, got {d}x{m}")));
    }
    if k == 0 || k > d {
        return Err(SketchError::Invalid(format!("SASO requires 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let scale = 1.0 / (k as f64).sqrt();
    let mut rows = vec![0usize; k * m];
    let mut values = vec![0.0; k * m];
    rows.par_chunks_mut(k).zip(values.par_chunks_mut(k)).enumerate().for_each_init(
        || (0..d).collect::<Vec<usize>>(),
        |perm, (j, (r, v))| {
            let col_key = seed.shifted((2 * k * j) as u64);
            match method {
                SasoMethod::ReplacementFree => {
                    let mut swaps = Vec::with_capacity(k);
                    for t in 0..k {
                        let u = col_key.uniform_at(t as u64);
                        let span = d - t;
                        let pick = t + ((u * span as f64) as usize).min(span - 1);
                        perm.swap(t, pick);
                        swaps.push(pick);
                        r[t] = perm[t];
                    }
                    for (t, &pick) in swaps.iter().enumerate().rev() {
                        perm.swap(t, pick);
                    }
                }
                SasoMethod::Blocked => {
                    for (t, rt) in r.iter_mut().enumerate() {
                        let lo = t * d / k;
                        let hi = (t + 1) * d / k;
                        let u = col_key.uniform_at(t as u64);
                        *rt = lo + ((u * (hi - lo) as f64) as usize).min(hi - lo - 1);
                    }
                }
            }
            for (t, vt) in v.iter_mut().enumerate() {
                *vt = if col_key.uniform_at((k + t) as u64) < 0.5 { -scale } else { scale };
            }
        },
    );
    Ok(Saso { d, m, k, seed, method, rows, values })
}

impl Saso {
    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = j * self.k..(j + 1) * self.k;
        (&self.rows[r.clone()], &self.values[r])
    }

    pub fn to_csr(&self) -> SasoCsr {
        let mut counts = vec![0usize; self.d + 1];
        for &i in &self.rows {
            counts[i + 1] += 1;
        }
        for i in 0..self.d {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0usize; self.rows.len()];
        let mut values = vec![0.0; self.rows.len()];
        for j in 0..self.m {
            let (r, v) = self.column(j);
            for (&i, &x) in r.iter().zip(v) {
                cols[next[i]] = j;
                values[next[i]] = x;
                next[i] += 1;
            }
        }
        SasoCsr { row_ptr, cols, values }
    }

    /// `S·A` on row-major data: `a_rm` holds the m×n matrix `A` row by row and
    /// the result is the d×n product, also row-major.
    pub fn apply_left_row_major(&self, a_rm: &[f64], n: usize, layout: SasoLayout) -> Vec<f64> {
        assert_eq!(a_rm.len(), self.m * n, "row-major input has the wrong length");
        let mut out = vec![0.0; self.d * n];
        match layout {
            SasoLayout::Csc => {
                for j in 0..self.m {
                    let src = &a_rm[j * n..(j + 1) * n];
                    let (r, v) = self.column(j);
                    for (&i, &x) in r.iter().zip(v) {
                        let dst = &mut out[i * n..(i + 1) * n];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += x * s;
                        }
                    }
                }
            }
            SasoLayout::Csr => {
                let csr = self.to_csr();
                out.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, dst)| {
                    for p in csr.row_ptr[i]..csr.row_ptr[i + 1] {
                        let (j, x) = (csr.cols[p], csr.values[p]);
                        for (o, s) in dst.iter_mut().zip(&a_rm[j * n..(j + 1) * n]) {
                            *o += x * s;
                        }
                    }
                });
            }
        }
        out
    }
}

impl SketchOperator for Saso {
    fn nrows(&self) -> usize {
        self.d
    }
    fn ncols(&self) -> usize {
        self.m
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = a.shape();
        assert_eq!(m, self.m, "SASO apply_left dimension mismatch");
        let mut out = DMatrix::zeros(self.d, n);
        if self.d == 0 || n == 0 {
            return out;
        }
        let src = a.as_slice();
        out.as_mut_slice().par_chunks_mut(self.d).enumerate().for_each(|(c, dst)| {
            let col = &src[c * m..(c + 1) * m];
            for (j, &aj) in col.iter().enumerate() {
                let (r, v) = self.column(j);
                for (&i, &x) in r.iter().zip(v) {
                    dst[i] += x * aj;
                }
            }
        });
        out
    }

    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, d) = a.shape();
        assert_eq!(d, self.d, "SASO apply_right dimension mismatch");
        let mut out = DMatrix::zeros(p, self.m);
        if p == 0 {
            return out;
        }
        let src = a.as_slice();
        out.as_mut_slice().par_chunks_mut(p).enumerate().for_each(|(j, dst)| {
            let (r, v) = self.column(j);
            for (&i, &x) in r.iter().zip(v) {
                for (o, s) in dst.iter_mut().zip(&src[i * p..(i + 1) * p]) {
                    *o += x * s;
                }
            }
        });
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.d, self.m);
        for j in 0..self.m {
            let (r, v) = self.column(j);
            for (&i, &x) in r.iter().zip(v) {
                s[(i, j)] += x;
            }
        }
        s
    }

    fn descriptor(&self) -> Option<SketchDescriptor> {
        Some(SketchDescriptor {
            family: "saso".into(),
            d: self.d,
            m: self.m,
            k: Some(self.k),
            seed: self.seed,
            method: Some(self.method),
            orientation: None,
            scale: None,
        })
    }
}
