//! Dense inner loops shared by the free functions and the gradient tape.
//!
//! Every accumulation runs over the reduction index in increasing order, so a
//! result never depends on the thread count.

use super::Real;
use crate::par;

/// `c[m×n] += a[m×k] · b[k×n]`.
pub fn gemm_acc<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if n == 0 {
        return;
    }
    let rows_per_task = (4096 / (n * k.max(1))).max(1);
    par::for_each_chunk(c, rows_per_task * n, |task, block| {
        let row0 = task * rows_per_task;
        for (r, crow) in block.chunks_mut(n).enumerate() {
            let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
            for (p, &av) in arow.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            }
        }
    });
}

/// Row-major transpose of a `rows×cols` matrix.
pub fn transpose<T: Real>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Batched `c_i += a_i · b_i` (or `a_i · b_iᵀ` when `trans_b`), `a_i` is `m×k`.
/// Without transposition `b_i` is `k×n`; with it `b_i` is `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn bmm_acc<T: Real>(
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    trans_b: bool,
    c: &mut [T],
) {
    if m * n == 0 {
        return;
    }
    par::for_each_chunk(c, m * n, |i, ci| {
        let ai = &a[i * m * k..(i + 1) * m * k];
        let bi = &b[i * k * n..(i + 1) * k * n];
        if trans_b {
            let bt = transpose(n, k, bi);
            gemm_seq(m, k, n, ai, &bt, ci);
        } else {
            gemm_seq(m, k, n, ai, bi, ci);
        }
    });
    debug_assert_eq!(c.len(), batch * m * n);
}

fn gemm_seq<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    for r in 0..m {
        let crow = &mut c[r * n..(r + 1) * n];
        for (p, &av) in a[r * k..(r + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (cv, &bv) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cv += av * bv;
            }
        }
    }
}

/// Row-wise softmax with max subtraction, in place.
pub fn softmax_rows_inplace<T: Real>(cols: usize, x: &mut [T]) {
    for row in x.chunks_mut(cols) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    T::lit(0.5) * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::lit(0.5)).exp() * T::lit(0.398_942_280_401_432_7);
    cdf + x * pdf
}

/// Neumaier-compensated sum; the rounding error stays O(ulp) independent of length.
pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let (mut sum, mut comp) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}
