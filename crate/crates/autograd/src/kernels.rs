//! Dense matrix kernels used by the graph ops.
//!
//! All kernels accumulate into `c` (callers zero it first when needed) and
//! parallelize over disjoint row blocks of the output, so the floating-point
//! evaluation order of every output element is fixed and results do not
//! depend on thread count or on the `parallel` feature.

use crate::par;
use crate::tensor::Scalar;

const LANES: usize = 8;

/// Dot product with 8 independent accumulator lanes folded in a fixed order.
/// The lane structure lets the loop vectorize; the explicit order keeps the
/// result identical across builds.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::ZERO; LANES];
    let chunks = a.len() / LANES;
    let (a_main, a_tail) = a.split_at(chunks * LANES);
    let (b_main, b_tail) = b.split_at(chunks * LANES);
    for (ca, cb) in a_main.chunks_exact(LANES).zip(b_main.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut sum = T::ZERO;
    for l in 0..LANES {
        sum += acc[l];
    }
    for (x, y) in a_tail.iter().zip(b_tail) {
        sum += *x * *y;
    }
    sum
}

/// Rows `c_rows` (r x n) += `a_rows` (r x k) · `b` (k x n).
fn nn_block<T: Scalar>(c_rows: &mut [T], a_rows: &[T], b: &[T], k: usize, n: usize) {
    for (c_row, a_row) in c_rows.chunks_exact_mut(n).zip(a_rows.chunks_exact(k)) {
        for (p, &coef) in a_row.iter().enumerate() {
            let b_row = &b[p * n..p * n + n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += coef * *bv;
            }
        }
    }
}

/// Rows `c_rows` (r x n) += `a_rows` (r x k) · `b`ᵀ, with `b` stored (n x k).
fn nt_block<T: Scalar>(c_rows: &mut [T], a_rows: &[T], b: &[T], k: usize, n: usize) {
    for (c_row, a_row) in c_rows.chunks_exact_mut(n).zip(a_rows.chunks_exact(k)) {
        for (cv, b_row) in c_row.iter_mut().zip(b.chunks_exact(k)) {
            *cv += dot(a_row, b_row);
        }
    }
}

/// Rows `first..first+r` of c (m x n) += rows of `a`ᵀ · `b`, with `a` stored
/// (k x m) and `b` stored (k x n). Row `i` of the output reads column `i`
/// of `a`.
fn tn_block<T: Scalar>(
    c_rows: &mut [T],
    first: usize,
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
) {
    for (r, c_row) in c_rows.chunks_exact_mut(n).enumerate() {
        let i = first + r;
        for p in 0..k {
            let coef = a[p * m + i];
            let b_row = &b[p * n..p * n + n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += coef * *bv;
            }
        }
    }
}

/// c (m x n) += a (m x k) · b (k x n).
pub fn matmul_nn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let chunk = par::chunk_rows_for(m);
    par::for_each_row_chunk(c, n, chunk, |first, c_rows| {
        let rows = c_rows.len() / n;
        nn_block(c_rows, &a[first * k..(first + rows) * k], b, k, n);
    });
}

/// c (m x n) += a (m x k) · bᵀ, with b stored (n x k).
pub fn matmul_nt<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let chunk = par::chunk_rows_for(m);
    par::for_each_row_chunk(c, n, chunk, |first, c_rows| {
        let rows = c_rows.len() / n;
        nt_block(c_rows, &a[first * k..(first + rows) * k], b, k, n);
    });
}

/// c (m x n) += aᵀ · b, with a stored (k x m) and b stored (k x n).
pub fn matmul_tn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let chunk = par::chunk_rows_for(m);
    par::for_each_row_chunk(c, n, chunk, |first, c_rows| {
        tn_block(c_rows, first, a, b, m, k, n);
    });
}

/// Batched `matmul_nn`: c (batch x m x n) += a (batch x m x k) · b (batch x k x n),
/// parallel over batch entries.
pub fn bmm_nn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], batch: usize, m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), batch * m * n);
    par::for_each_row_chunk(c, m * n, 1, |bi, c_mat| {
        nn_block(c_mat, &a[bi * m * k..(bi + 1) * m * k], &b[bi * k * n..(bi + 1) * k * n], k, n);
    });
}

/// Batched `matmul_nt` with b stored (batch x n x k).
pub fn bmm_nt<T: Scalar>(c: &mut [T], a: &[T], b: &[T], batch: usize, m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), batch * m * n);
    par::for_each_row_chunk(c, m * n, 1, |bi, c_mat| {
        nt_block(c_mat, &a[bi * m * k..(bi + 1) * m * k], &b[bi * n * k..(bi + 1) * n * k], k, n);
    });
}

/// Batched `matmul_tn` with a stored (batch x k x m).
pub fn bmm_tn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], batch: usize, m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), batch * m * n);
    par::for_each_row_chunk(c, m * n, 1, |bi, c_mat| {
        tn_block(c_mat, 0, &a[bi * k * m..(bi + 1) * k * m], &b[bi * k * n..(bi + 1) * k * n], m, k, n);
    });
}

/// Serial reference implementations, kept around for the benchmark suite and
/// the kernel equivalence tests.
pub mod serial {
    use super::*;

    pub fn matmul_nn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], _m: usize, k: usize, n: usize) {
        nn_block(c, a, b, k, n);
    }

    pub fn matmul_nt<T: Scalar>(c: &mut [T], a: &[T], b: &[T], _m: usize, k: usize, n: usize) {
        nt_block(c, a, b, k, n);
    }

    pub fn matmul_tn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
        tn_block(c, 0, a, b, m, k, n);
    }
}
