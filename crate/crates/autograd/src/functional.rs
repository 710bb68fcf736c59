//! Pure tensor-free numeric helpers shared by ops, trainers, and oracles.

use rand::Rng;

use crate::tensor::Scalar;

/// Numerically stable softmax with max subtraction.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    assert!(!row.is_empty(), "softmax of empty slice");
    let mut mx = row[0];
    for &v in row.iter() {
        mx = mx.max_val(v);
    }
    let mut z = T::ZERO;
    for v in row.iter_mut() {
        let e = (*v - mx).fast_exp();
        *v = e;
        z += e;
    }
    let inv = T::ONE / z;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let mut out = row.to_vec();
    softmax_in_place(&mut out);
    out
}

/// log Σ exp with max subtraction.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    assert!(!row.is_empty());
    let mut mx = row[0];
    for &v in row.iter() {
        mx = mx.max_val(v);
    }
    let mut z = T::ZERO;
    for &v in row.iter() {
        z += (v - mx).exp();
    }
    z.ln() + mx
}

/// Draws an index from an (approximately normalized) probability vector by
/// inverse CDF walk in f64. Rounding shortfall at the top lands on the last
/// index.
pub fn sample_categorical<T: Scalar>(probs: &[T], rng: &mut impl Rng) -> usize {
    assert!(!probs.is_empty());
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0f64;
    for (i, &p) in probs.iter().enumerate() {
        acc += p.to_f64();
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
