//! Forward kernels shared by the tape and by plain tensor code.
//!
//! The `gemm_*` routines work on raw row-major slices and split output rows
//! across the current rayon pool once the product is large enough. Every
//! output element is produced by one thread in a fixed order, so results do
//! not depend on the pool size.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Layer-norm variance epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Multiply-accumulate count above which a product is split across threads.
const PARALLEL_WORK: usize = 1 << 18;

fn rows_per_task(rows: usize, work: usize) -> usize {
    if work < PARALLEL_WORK {
        rows.max(1)
    } else {
        let tasks = rayon::current_num_threads().max(1) * 2;
        rows.div_ceil(tasks).max(1)
    }
}

#[inline]
fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `c[m,n] += a[m,k] · b[k,n]`
pub(crate) fn gemm_nn<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    let step = rows_per_task(m, m * k * n);
    let body = |(blk, cs): (usize, &mut [F])| {
        let row0 = blk * step;
        for (r, crow) in cs.chunks_mut(n).enumerate() {
            let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
            for (p, &alpha) in arow.iter().enumerate() {
                if alpha != F::zero() {
                    axpy(alpha, &b[p * n..(p + 1) * n], crow);
                }
            }
        }
    };
    if step >= m {
        body((0, c));
    } else {
        c.par_chunks_mut(step * n).enumerate().for_each(body);
    }
}

/// `c[m,n] += a[m,k] · b[n,k]ᵀ`
pub(crate) fn gemm_nt<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    let step = rows_per_task(m, m * k * n);
    let body = |(blk, cs): (usize, &mut [F])| {
        let row0 = blk * step;
        for (r, crow) in cs.chunks_mut(n).enumerate() {
            let arow = &a[(row0 + r) * k..(row0 + r + 1) * k];
            for (j, cj) in crow.iter_mut().enumerate() {
                *cj += dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
    };
    if step >= m {
        body((0, c));
    } else {
        c.par_chunks_mut(step * n).enumerate().for_each(body);
    }
}

/// `c[k,n] += a[m,k]ᵀ · b[m,n]`
pub(crate) fn gemm_tn<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    let step = rows_per_task(k, m * k * n);
    let body = |(blk, cs): (usize, &mut [F])| {
        let p0 = blk * step;
        let width = cs.len() / n;
        for i in 0..m {
            let arow = &a[i * k + p0..i * k + p0 + width];
            let brow = &b[i * n..(i + 1) * n];
            for (dp, &alpha) in arow.iter().enumerate() {
                if alpha != F::zero() {
                    axpy(alpha, brow, &mut cs[dp * n..(dp + 1) * n]);
                }
            }
        }
    };
    if step >= k {
        body((0, c));
    } else {
        c.par_chunks_mut(step * n).enumerate().for_each(body);
    }
}

fn matrix_dims<F: Scalar>(t: &Tensor<F>, op: &'static str, other: &Tensor<F>) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: other.shape().to_vec(),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Matrix product of `[m,k]` and `[k,n]`.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k) = matrix_dims(a, "matmul", b)?;
    let (k2, n) = matrix_dims(b, "matmul", a)?;
    if k != k2 {
        return Err(Error::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    gemm_nn(a.data(), b.data(), out.data_mut(), m, k, n);
    Ok(out)
}

/// `a · bᵀ` for `[m,k]` and `[n,k]`.
pub(crate) fn matmul_nt<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k) = matrix_dims(a, "matmul_nt", b)?;
    let (n, k2) = matrix_dims(b, "matmul_nt", a)?;
    if k != k2 {
        return Err(Error::Shape {
            op: "matmul_nt",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(&[m, n]);
    gemm_nt(a.data(), b.data(), out.data_mut(), m, k, n);
    Ok(out)
}

pub(crate) fn softmax_row<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = total.recip();
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Softmax along the last axis, with the row maximum subtracted first.
pub fn softmax<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut out = x.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        softmax_row(row);
    }
    out
}

/// Normalized rows and the per-row reciprocal standard deviation.
pub(crate) struct LayerNormCache<F> {
    pub xhat: Vec<F>,
    pub rstd: Vec<F>,
}

pub(crate) fn layer_norm_forward<F: Scalar>(
    x: &Tensor<F>,
    gain: &Tensor<F>,
    bias: &Tensor<F>,
    eps: F,
) -> Result<(Tensor<F>, LayerNormCache<F>)> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::Shape {
            op: "layer_norm",
            lhs: x.shape().to_vec(),
            rhs: gain.shape().to_vec(),
        });
    }
    let n = F::of(d as f64);
    let mut out = x.clone();
    let mut xhat = vec![F::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.rows());
    for (r, row) in out.data_mut().chunks_mut(d).enumerate() {
        let mean = row.iter().copied().sum::<F>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let rs = (var + eps).sqrt().recip();
        rstd.push(rs);
        let xh = &mut xhat[r * d..(r + 1) * d];
        for j in 0..d {
            xh[j] = (row[j] - mean) * rs;
            row[j] = xh[j] * gain.data()[j] + bias.data()[j];
        }
    }
    Ok((out, LayerNormCache { xhat, rstd }))
}

/// Per-row normalization to zero mean and unit variance, then `gain * x + bias`.
pub fn layer_norm<F: Scalar>(x: &Tensor<F>, gain: &Tensor<F>, bias: &Tensor<F>, eps: F) -> Result<Tensor<F>> {
    if eps <= F::zero() {
        return Err(Error::Parameter(format!("layer_norm eps must be positive, got {eps}")));
    }
    layer_norm_forward(x, gain, bias, eps).map(|(out, _)| out)
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[inline]
pub(crate) fn gelu_scalar<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    x * half * (F::one() + (x * F::of(FRAC_1_SQRT_2)).erf())
}

/// d/dx [x·Φ(x)] = Φ(x) + x·φ(x)
#[inline]
pub(crate) fn gelu_derivative<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let cdf = half * (F::one() + (x * F::of(FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * F::of(0.398_942_280_401_432_7);
    cdf + x * pdf
}

/// Exact GeLU, `x·Φ(x)` with Φ the standard normal CDF.
pub fn gelu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(gelu_scalar)
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Inverted-dropout multipliers: 0 for dropped elements, `1/(1-rate)` for kept ones.
pub(crate) fn dropout_mask<F: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

/// Inverted dropout. Identity in inference mode and at rate 0.
pub fn dropout<F: Scalar, R: Rng + ?Sized>(x: &Tensor<F>, rate: f64, rng: &mut R, training: bool) -> Result<Tensor<F>> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask: Vec<F> = dropout_mask(x.len(), rate, rng);
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    Ok(out)
}
