//! Truncated SVD for compressing embedding tables.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::nn::{kernels, Tensor};

/// Thin SVD `M = U·diag(σ)·Vᵀ` with `σ` sorted descending. `u` is `n×r`
/// and `v` is `m×r` with `r = min(n, m)`, both row-major. Each pair of
/// singular vectors is signed so the largest-magnitude entry of `v` is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Tensor,
    pub sigma: Vec<f64>,
    pub v: Tensor,
}

const MAX_SWEEPS: usize = 80;
const TOL: f64 = 1e-15;

/// One-sided Jacobi SVD.
pub fn svd(m: &Tensor) -> Result<Svd> {
    let (n, cols) = (m.rows(), m.cols());
    if m.data().iter().any(|x| !x.is_finite()) {
        bail!(NonFinite, "matrix passed to svd contains non-finite values");
    }
    if n < cols {
        let t = transpose(m.data(), n, cols);
        let s = svd(&Tensor::matrix(cols, n, t)?)?;
        return Ok(signed(Svd { u: s.v, sigma: s.sigma, v: s.u }));
    }
    // columns of M, stored contiguously
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..n).map(|i| m.data()[i * cols + j]).collect()).collect();
    let mut vc: Vec<Vec<f64>> = (0..cols).map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = kernels::dot(&a[p], &a[p]);
                let beta = kernels::dot(&a[q], &a[q]);
                let gamma = kernels::dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= TOL * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut vc, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = a.iter().enumerate().map(|(j, col)| (libm::sqrt(kernels::dot(col, col)), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut u = alloc::vec![0.0; n * cols];
    let mut v = alloc::vec![0.0; cols * cols];
    let mut sigma = Vec::with_capacity(cols);
    for (k, &(s, j)) in order.iter().enumerate() {
        sigma.push(s);
        for i in 0..n {
            u[i * cols + k] = if s > 0.0 { a[j][i] / s } else { 0.0 };
        }
        for i in 0..cols {
            v[i * cols + k] = vc[j][i];
        }
    }
    Ok(signed(Svd { u: Tensor::matrix(n, cols, u)?, sigma, v: Tensor::matrix(cols, cols, v)? }))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; data.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = data[i * cols + j];
        }
    }
    out
}

fn signed(mut s: Svd) -> Svd {
    let r = s.sigma.len();
    let (nu, nv) = (s.u.rows(), s.v.rows());
    for k in 0..r {
        let mut best = 0.0f64;
        for i in 0..nv {
            let x = s.v.data()[i * r + k];
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            for i in 0..nv {
                s.v.data_mut()[i * r + k] *= -1.0;
            }
            for i in 0..nu {
                s.u.data_mut()[i * r + k] *= -1.0;
            }
        }
    }
    s
}

/// Rank-`k` reduction `U_k·Σ_k` of a `V×D` table, which equals `M·V_k`.
pub fn svd_reduce(m: &Tensor, k: usize) -> Result<Tensor> {
    Ok(svd_reduce_with_basis(m, k)?.0)
}

/// Like [`svd_reduce`] but also returns the `D×k` right basis `V_k`.
pub fn svd_reduce_with_basis(m: &Tensor, k: usize) -> Result<(Tensor, Tensor)> {
    let r = m.rows().min(m.cols());
    if k == 0 || k > r {
        bail!(Config, "cannot reduce a {}x{} table to rank {}", m.rows(), m.cols(), k);
    }
    let s = svd(m)?;
    let (n, d) = (m.rows(), m.cols());
    let mut reduced = alloc::vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            reduced[i * k + j] = s.u.data()[i * r + j] * s.sigma[j];
        }
    }
    let mut basis = alloc::vec![0.0; d * k];
    for i in 0..d {
        basis[i * k..(i + 1) * k].copy_from_slice(&s.v.data()[i * r..i * r + k]);
    }
    Ok((Tensor::matrix(n, k, reduced)?, Tensor::matrix(d, k, basis)?))
}

/// `reduced · basisᵀ`, back in the original `V×D` space.
pub fn reconstruct(reduced: &Tensor, basis: &Tensor) -> Result<Tensor> {
    let (n, k) = (reduced.rows(), reduced.cols());
    let (d, k2) = (basis.rows(), basis.cols());
    if k != k2 {
        bail!(Shape, "reduced width {} does not match basis width {}", k, k2);
    }
    let mut out = alloc::vec![0.0; n * d];
    kernels::matmul_bt(reduced.data(), basis.data(), &mut out, n, k, d);
    Tensor::matrix(n, d, out)
}

pub fn frobenius(m: &Tensor) -> f64 {
    libm::sqrt(m.data().iter().map(|x| x * x).sum())
}

/// `‖a − b‖_F`.
pub fn frobenius_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        bail!(Shape, "shapes {:?} and {:?} differ", a.shape(), b.shape());
    }
    Ok(libm::sqrt(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()))
}
