//! Dense loops shared by the forward and backward passes.

/// `out[n×m] += a[n×k] · b[k×m]`
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm(n, k, m, a, (k, 1), b, (m, 1), out);
}

/// `out[n×k] += g[n×m] · bᵀ` where `b` is `k×m`.
pub fn matmul_bt(g: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    gemm(n, m, k, g, (m, 1), b, (1, m), out);
}

/// `out[k×m] += aᵀ · g` where `a` is `n×k` and `g` is `n×m`.
pub fn matmul_at(a: &[f64], g: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm(k, n, m, a, (1, k), g, (m, 1), out);
}

/// `c[n×m] += a[n×k] · b[k×m]` with (row, column) strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(n: usize, k: usize, m: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64]) {
    assert!(a.len() >= n * k && b.len() >= k * m && c.len() >= n * m, "gemm operand sizes");
    if n == 0 || m == 0 || k == 0 {
        return;
    }
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            n, k, m, 1.0,
            a.as_ptr(), sa.0 as isize, sa.1 as isize,
            b.as_ptr(), sb.0 as isize, sb.1 as isize,
            1.0,
            c.as_mut_ptr(), m as isize, 1,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[c * 4 + l] * b[c * 4 + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[inline]
pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += xv;
    }
}

/// Writes `softmax(row)` into `out` and returns `log Σ exp(row)`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = libm::exp(v - max);
        *o = e;
        z += e;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    max + libm::log(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] · [5; 6] = [17; 39]
        let mut out = [0.0; 2];
        matmul(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], &mut out, 2, 2, 1);
        assert_eq!(out, [17.0, 39.0]);
    }

    #[test]
    fn transposed_products_agree_with_definition() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let g = [1.0, -1.0, 0.5, 2.0]; // 2×2
        let mut at_g = [0.0; 6];
        matmul_at(&a, &g, &mut at_g, 2, 3, 2);
        // aᵀ·g computed by hand
        assert_eq!(at_g, [1.0 + 4.0 * 0.5, -1.0 + 8.0, 2.0 + 2.5, -2.0 + 10.0, 3.0 + 3.0, -3.0 + 12.0]);
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3×2
        let mut g_bt = [0.0; 6];
        matmul_bt(&g, &b, &mut g_bt, 2, 2, 3);
        assert_eq!(g_bt, [1.0, -1.0, 0.0, 0.5, 2.0, 2.5]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut out = [0.0; 4];
        let lse = softmax_into(&[0.0; 4], &mut out);
        assert!(out.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!((lse - libm::log(4.0)).abs() < 1e-15);
    }
}
