// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward and backward kernels.
//!
//! Each op is a pair of free functions: `op` computes the output (plus a
//! cache when the backward pass needs intermediates) and `op_backward`
//! maps the output gradient to input and parameter gradients. Parameter
//! gradients are accumulated into caller-owned buffers so a model can sum
//! contributions without extra copies.

use super::tensor::{Scalar, Tensor2D};
use crate::error::{Error, Result};

/// Whether an operand enters a product transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

fn op_shape<T: Scalar>(t: &Tensor2D<T>, tr: Trans) -> (usize, usize) {
    match tr {
        Trans::No => (t.rows(), t.cols()),
        Trans::Yes => (t.cols(), t.rows()),
    }
}

fn strides<T: Scalar>(t: &Tensor2D<T>, tr: Trans) -> (isize, isize) {
    match tr {
        Trans::No => (t.cols() as isize, 1),
        Trans::Yes => (1, t.cols() as isize),
    }
}

/// `out = alpha * op(a) * op(b) + beta * out`.
pub fn gemm_into<T: Scalar>(
    a: &Tensor2D<T>,
    ta: Trans,
    b: &Tensor2D<T>,
    tb: Trans,
    alpha: T,
    beta: T,
    out: &mut Tensor2D<T>,
) -> Result<()> {
    let (m, k) = op_shape(a, ta);
    let (k2, n) = op_shape(b, tb);
    if k != k2 || out.shape() != (m, n) {
        return Err(Error::shape(format!(
            "gemm: ({m}x{k}) * ({k2}x{n}) into {:?}",
            out.shape()
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    let (rsa, csa) = strides(a, ta);
    let (rsb, csb) = strides(b, tb);
    let rsc = n as isize;
    // SAFETY: shapes and strides were validated against the buffers above,
    // and `out` is a distinct &mut borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            beta,
            out.data_mut().as_mut_ptr(),
            rsc,
            1,
        );
    }
    Ok(())
}

pub fn matmul<T: Scalar>(a: &Tensor2D<T>, b: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    let mut out = Tensor2D::zeros(a.rows(), b.cols());
    gemm_into(a, Trans::No, b, Trans::No, T::ONE, T::ZERO, &mut out)?;
    Ok(out)
}

/// Gradients of `c = a * b`: returns `da = dc * b^T` and accumulates
/// `a^T * dc` into `db`.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor2D<T>,
    b: &Tensor2D<T>,
    dc: &Tensor2D<T>,
    db: &mut Tensor2D<T>,
) -> Result<Tensor2D<T>> {
    gemm_into(a, Trans::Yes, dc, Trans::No, T::ONE, T::ONE, db)?;
    let mut da = Tensor2D::zeros(a.rows(), a.cols());
    gemm_into(dc, Trans::No, b, Trans::Yes, T::ONE, T::ZERO, &mut da)?;
    Ok(da)
}

/// Adds a `1 x cols` bias to every row, in place.
pub fn add_bias<T: Scalar>(x: &mut Tensor2D<T>, bias: &Tensor2D<T>) -> Result<()> {
    if bias.rows() != 1 || bias.cols() != x.cols() {
        return Err(Error::shape(format!(
            "add_bias: bias {:?} for {:?}",
            bias.shape(),
            x.shape()
        )));
    }
    let b = bias.row(0);
    for r in 0..x.rows() {
        for (v, &bb) in x.row_mut(r).iter_mut().zip(b) {
            *v += bb;
        }
    }
    Ok(())
}

/// Column sums of `dy` accumulated (in f64) into `dbias`.
pub fn add_bias_backward<T: Scalar>(dy: &Tensor2D<T>, dbias: &mut Tensor2D<T>) -> Result<()> {
    if dbias.shape() != (1, dy.cols()) {
        return Err(Error::shape("add_bias_backward"));
    }
    let mut acc = vec![0f64; dy.cols()];
    for r in 0..dy.rows() {
        for (a, &g) in acc.iter_mut().zip(dy.row(r)) {
            *a += g.to_f64();
        }
    }
    for (d, a) in dbias.row_mut(0).iter_mut().zip(acc) {
        *d += T::from_f64(a);
    }
    Ok(())
}

/// `x * w + b` in one call.
pub fn linear<T: Scalar>(x: &Tensor2D<T>, w: &Tensor2D<T>, b: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    let mut y = matmul(x, w)?;
    add_bias(&mut y, b)?;
    Ok(y)
}

/// Backward of [`linear`]: accumulates into `dw`, `db`, returns `dx`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor2D<T>,
    w: &Tensor2D<T>,
    dy: &Tensor2D<T>,
    dw: &mut Tensor2D<T>,
    db: &mut Tensor2D<T>,
) -> Result<Tensor2D<T>> {
    add_bias_backward(dy, db)?;
    matmul_backward(x, w, dy, dw)
}

/// Gathers rows of `table`.
pub fn embedding_lookup<T: Scalar>(table: &Tensor2D<T>, ids: &[usize]) -> Result<Tensor2D<T>> {
    let mut out = Tensor2D::zeros(ids.len(), table.cols());
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::shape(format!("embedding id {id} >= {}", table.rows())));
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatter-adds `dy` rows into `dtable`, in row order.
pub fn embedding_backward<T: Scalar>(
    ids: &[usize],
    dy: &Tensor2D<T>,
    dtable: &mut Tensor2D<T>,
) -> Result<()> {
    if dy.rows() != ids.len() || dy.cols() != dtable.cols() {
        return Err(Error::shape("embedding_backward"));
    }
    for (r, &id) in ids.iter().enumerate() {
        for (d, &g) in dtable.row_mut(id).iter_mut().zip(dy.row(r)) {
            *d += g;
        }
    }
    Ok(())
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct LayerNormCache<T: Scalar> {
    xhat: Tensor2D<T>,
    rstd: Vec<f64>,
}

/// Per-row normalisation to zero mean and unit variance, then `gamma * xhat + beta`.
pub fn layer_norm<T: Scalar>(
    x: &Tensor2D<T>,
    gamma: &Tensor2D<T>,
    beta: &Tensor2D<T>,
) -> Result<(Tensor2D<T>, LayerNormCache<T>)> {
    let d = x.cols();
    if gamma.shape() != (1, d) || beta.shape() != (1, d) {
        return Err(Error::shape("layer_norm affine"));
    }
    let mut xhat = Tensor2D::zeros(x.rows(), d);
    let mut y = Tensor2D::zeros(x.rows(), d);
    let mut rstd = Vec::with_capacity(x.rows());
    let (g, b) = (gamma.row(0), beta.row(0));
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / d as f64;
        let var = row
            .iter()
            .map(|v| {
                let c = v.to_f64() - mean;
                c * c
            })
            .sum::<f64>()
            / d as f64;
        let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd.push(rs);
        let xr = xhat.row_mut(r);
        for (o, v) in xr.iter_mut().zip(row) {
            *o = T::from_f64((v.to_f64() - mean) * rs);
        }
        let xr = xhat.row(r).to_vec();
        for (j, o) in y.row_mut(r).iter_mut().enumerate() {
            *o = g[j] * xr[j] + b[j];
        }
    }
    Ok((y, LayerNormCache { xhat, rstd }))
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gamma: &Tensor2D<T>,
    dy: &Tensor2D<T>,
    dgamma: &mut Tensor2D<T>,
    dbeta: &mut Tensor2D<T>,
) -> Result<Tensor2D<T>> {
    let (n, d) = dy.shape();
    if cache.xhat.shape() != (n, d) {
        return Err(Error::shape("layer_norm_backward"));
    }
    let g = gamma.row(0);
    let mut dg = vec![0f64; d];
    let mut dbt = vec![0f64; d];
    let mut dx = Tensor2D::zeros(n, d);
    let mut dxhat = vec![0f64; d];
    for r in 0..n {
        let xh = cache.xhat.row(r);
        let dyr = dy.row(r);
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let gy = dyr[j].to_f64();
            let xv = xh[j].to_f64();
            dg[j] += gy * xv;
            dbt[j] += gy;
            dxhat[j] = gy * g[j].to_f64();
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xv;
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let rs = cache.rstd[r];
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            let v = rs * (dxhat[j] - mean_dxhat - xh[j].to_f64() * mean_dxhat_xhat);
            *o = T::from_f64(v);
        }
    }
    for (o, v) in dgamma.row_mut(0).iter_mut().zip(dg) {
        *o += T::from_f64(v);
    }
    for (o, v) in dbeta.row_mut(0).iter_mut().zip(dbt) {
        *o += T::from_f64(v);
    }
    Ok(dx)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu<T: Scalar>(x: &Tensor2D<T>) -> Tensor2D<T> {
    let half = T::from_f64(0.5);
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(GELU_K);
    x.map(|v| half * v * (T::ONE + (c * (v + k * v * v * v)).tanh()))
}

pub fn gelu_backward<T: Scalar>(x: &Tensor2D<T>, dy: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    x.same_shape(dy, "gelu_backward")?;
    let half = T::from_f64(0.5);
    let c = T::from_f64(GELU_C);
    let k = T::from_f64(GELU_K);
    let k3 = T::from_f64(3.0 * GELU_K);
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| {
            let t = (c * (v + k * v * v * v)).tanh();
            let dt = c * (T::ONE + k3 * v * v);
            g * (half * (T::ONE + t) + half * v * (T::ONE - t * t) * dt)
        })
        .collect();
    Tensor2D::from_vec(x.rows(), x.cols(), data)
}

/// Softmax of one slice into `out`; max-shifted, normaliser summed in f64.
pub(crate) fn softmax_slice<T: Scalar>(x: &[T], out: &mut [T]) {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
    let mut sum = 0f64;
    for (o, v) in out.iter_mut().zip(x) {
        let e = (v.to_f64() - max).exp();
        sum += e;
        *o = T::from_f64(e);
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o = T::from_f64(o.to_f64() * inv);
    }
}

pub fn softmax_rows<T: Scalar>(x: &Tensor2D<T>) -> Tensor2D<T> {
    let mut out = Tensor2D::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        softmax_slice(x.row(r), out.row_mut(r));
    }
    out
}

/// `dx = y * (dy - sum(dy * y))` row-wise, given the softmax output `y`.
pub fn softmax_rows_backward<T: Scalar>(y: &Tensor2D<T>, dy: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    y.same_shape(dy, "softmax_backward")?;
    let mut dx = Tensor2D::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), dy.row(r));
        let s: f64 = yr.iter().zip(gr).map(|(a, b)| a.to_f64() * b.to_f64()).sum();
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = T::from_f64(yr[j].to_f64() * (gr[j].to_f64() - s));
        }
    }
    Ok(dx)
}

pub struct CrossEntropyCache<T: Scalar> {
    probs: Tensor2D<T>,
    targets: Vec<Option<usize>>,
    count: usize,
}

impl<T: Scalar> CrossEntropyCache<T> {
    pub fn probs(&self) -> &Tensor2D<T> {
        &self.probs
    }
}

/// Mean negative log-likelihood of `targets` under `softmax(logits)`;
/// `None` targets are masked out of the mean.
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor2D<T>,
    targets: &[Option<usize>],
) -> Result<(f64, CrossEntropyCache<T>)> {
    if targets.len() != logits.rows() {
        return Err(Error::shape(format!(
            "cross_entropy: {} targets for {} rows",
            targets.len(),
            logits.rows()
        )));
    }
    let count = targets.iter().filter(|t| t.is_some()).count();
    if count == 0 {
        return Err(Error::AllMasked);
    }
    let mut probs = Tensor2D::zeros(logits.rows(), logits.cols());
    let mut total = 0f64;
    for (r, target) in targets.iter().enumerate() {
        let row = logits.row(r);
        softmax_slice(row, probs.row_mut(r));
        if let Some(t) = *target {
            if t >= logits.cols() {
                return Err(Error::InvalidLabel(format!(
                    "target {t} >= {} classes",
                    logits.cols()
                )));
            }
            // log-sum-exp in f64 for the loss itself
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64()));
            let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
            total += lse - row[t].to_f64();
        }
    }
    Ok((
        total / count as f64,
        CrossEntropyCache {
            probs,
            targets: targets.to_vec(),
            count,
        },
    ))
}

/// Gradient of the mean loss with respect to the logits, scaled by `scale`.
pub fn cross_entropy_backward<T: Scalar>(cache: &CrossEntropyCache<T>, scale: f64) -> Tensor2D<T> {
    let mut d = Tensor2D::zeros(cache.probs.rows(), cache.probs.cols());
    let w = scale / cache.count as f64;
    for (r, target) in cache.targets.iter().enumerate() {
        if let Some(t) = *target {
            let p = cache.probs.row(r);
            let out = d.row_mut(r);
            for (j, o) in out.iter_mut().enumerate() {
                *o = T::from_f64(p[j].to_f64() * w);
            }
            out[t] -= T::from_f64(w);
        }
    }
    d
}
