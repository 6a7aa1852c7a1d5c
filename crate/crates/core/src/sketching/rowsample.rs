use nalgebra::DMatrix;

use super::{SketchError, SketchOperator};
use crate::rng::RngKey;

/// d×m row sampler: row i is `e_{t_i}ᵀ / √(d·q_{t_i})` with the `t_i` drawn
/// iid from `q`.
#[derive(Clone, Debug)]
pub struct RowSampleOp {
    pub d: usize,
    pub m: usize,
    pub probs: Vec<f64>,
    pub indices: Vec<usize>,
    pub scales: Vec<f64>,
    pub seed: RngKey,
}

pub fn sample_row_sampler(d: usize, q: &[f64], seed: RngKey) -> Result<RowSampleOp, SketchError> {
    let m = q.len();
    if d == 0 || m == 0 {
        return Err(SketchError::Invalid("row sampler needs d >= 1 and a nonempty distribution".into()));
    }
    if let Some(j) = q.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(SketchError::Invalid(format!("probability {} at index {j} is not a nonnegative number", q[j])));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(SketchError::Invalid(format!("probabilities sum to {total}, expected 1")));
    }
    let mut cdf = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &p in q {
        acc += p;
        cdf.push(acc);
    }
    let last_positive = q.iter().rposition(|&p| p > 0.0).expect("sum is positive");
    let indices: Vec<usize> = (0..d)
        .map(|i| {
            let u = seed.uniform_at(i as u64) * total;
            let mut t = cdf.partition_point(|&c| c <= u);
            if t > last_positive {
                t = last_positive;
            }
            // Skip zero-probability entries that share a cdf value.
            while q[t] == 0.0 && t < last_positive {
                t += 1;
            }
            t
        })
        .collect();
    let scales = indices.iter().map(|&t| 1.0 / (d as f64 * q[t]).sqrt()).collect();
    Ok(RowSampleOp { d, m, probs: q.to_vec(), indices, scales, seed })
}

impl SketchOperator for RowSampleOp {
    fn nrows(&self) -> usize {
        self.d
    }
    fn ncols(&self) -> usize {
        self.m
    }
    fn apply_left(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.m, "row sampler dimension mismatch");
        let mut out = DMatrix::zeros(self.d, a.ncols());
        for (i, (&t, &s)) in self.indices.iter().zip(&self.scales).enumerate() {
            out.set_row(i, &(a.row(t) * s));
        }
        out
    }
    fn apply_right(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.ncols(), self.d, "row sampler dimension mismatch");
        let mut out = DMatrix::zeros(a.nrows(), self.m);
        for (i, (&t, &s)) in self.indices.iter().zip(&self.scales).enumerate() {
            out.column_mut(t).axpy(s, &a.column(i), 1.0);
        }
        out
    }
}
