use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{SketchDescriptor, SketchError, SketchOperator};
use crate::rng::RngKey;

/// d×m subsampled randomized Walsh–Hadamard transform:
/// `S = √(m̃/d) · R · H · D · P`, where `P` zero-pads to m̃ = 2^⌈log₂ m⌉,
/// `D` flips signs, `H` is the orthonormal Walsh–Hadamard matrix of order m̃
/// and `R` keeps d distinct coordinates.
#[derive(Clone, Debug)]
pub struct SrftOp {
    pub d: usize,
    pub m: usize,
    pub m_padded: usize,
    pub signs: Vec<f64>,
    pub coords: Vec<usize>,
    pub seed: RngKey,
}

pub fn sample_srft(d: usize, m: usize, seed: RngKey) -> Result<SrftOp, SketchError> {
    if d == 0 || m == 0 || d > m {
        return Err(SketchError::Invalid(format!("SRFT requires 1 <= d <= m, got {d}x{m}")));
    }
    let m_padded = m.next_power_of_two();
    let signs = (0..m as u64).map(|i| seed.rademacher_at(i)).collect();
    let mut stream = seed.shifted(m as u64).stream();
    let mut perm: Vec<usize> = (0..m_padded).collect();
    for t in 0..d {
        let pick = t + stream.next_index(m_padded - t);
        perm.swap(t, pick);
    }
    perm.truncate(d);
    Ok(SrftOp { d, m, m_padded, signs, coords: perm, seed })
}

/// In-place unnormalized fast Walsh–Hadamard transform (length must be a
/// power of two).
pub fn fwht(x: &mut [f64]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in x.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, t) = (*a + *b, *a - *b);
                *a = s;
                *b = t;
            }
        }
        h *= 2;
    }
}

impl SrftOp {
    // √(m̃/d) from the definition times 1/√m̃ from normalizing H.
    fn scale(&self) -> f64 {
        1.0 / (self.d as f64).sqrt()
    }

    fn forward(&self, src: &[f64], dst: &mut [f64], buf: &mut [f64]) {
        buf.fill(0.0);
        for (j, (&x, &e)) in src.iter().zip(&self.signs).enumerate() {
            buf[j] = x * e;
        }
        fwht(buf);
        let s = self.scale();
        for (o, &c) in dst.iter_mut().zip(&self.coords) {
            *o = s * buf[c];
        }
    }

    fn adjoint(&self, src: &[f64], dst: &mut [f64], buf: &mut [f64]) {
        buf.fill(0.0);
        for (&x, &c) in src.iter().zip(&self.coords) {
            buf[c] += x;
        }
        fwht(buf);
        let s = self.scale();
        for (j, (o, &e)) in dst.iter_mut().zip(&self.signs).enumerate() {
            *o = s * e * buf[j];
        }
    }
}

impl SketchOperator for SrftOp {
    fn nrows(&self) -> usize {
        self.d
    }
    fn ncols(&self) -> usize {
        self.m
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.m, "SRFT apply_left dimension mismatch");
        let n = a.ncols();
        let mut out = DMatrix::zeros(self.d, n);
        let src = a.as_slice();
        out.as_mut_slice().par_chunks_mut(self.d).enumerate().for_each_init(
            || vec![0.0; self.m_padded],
            |buf, (c, dst)| self.forward(&src[c * self.m..(c + 1) * self.m], dst, buf),
        );
        out
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.ncols(), self.d, "SRFT apply_right dimension mismatch");
        let at = a.transpose();
        let p = a.nrows();
        let mut out_t = DMatrix::zeros(self.m, p);
        let src = at.as_slice();
        out_t.as_mut_slice().par_chunks_mut(self.m).enumerate().for_each_init(
            || vec![0.0; self.m_padded],
            |buf, (r, dst)| self.adjoint(&src[r * self.d..(r + 1) * self.d], dst, buf),
        );
        out_t.transpose()
    }
    fn descriptor(&self) -> Option<SketchDescriptor> {
        Some(SketchDescriptor {
            family: "srft".into(),
            d: self.d,
            m: self.m,
            k: None,
            seed: self.seed,
            method: None,
            orientation: None,
            scale: None,
        })
    }
}
