// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-head causal self-attention over a batch of equal-length sequences.
//!
//! Inputs are `(batch * seq_len) x d` matrices with the rows of each
//! sequence contiguous. Head `h` uses columns `h * d/H .. (h + 1) * d/H`.
//! Position `i` attends to positions `0..=i` of its own sequence only.

use super::tensor::{Scalar, Tensor2D};
use crate::error::{Error, Result};

pub struct AttentionCache<T: Scalar> {
    /// Attention weights, `[batch][head][query][key]`, zero above the diagonal.
    probs: Vec<T>,
    seq_len: usize,
    n_heads: usize,
}

impl<T: Scalar> AttentionCache<T> {
    /// Weights of one head for one sequence, `seq_len x seq_len` row-major.
    pub fn pattern(&self, batch: usize, head: usize) -> &[T] {
        let tt = self.seq_len * self.seq_len;
        let start = (batch * self.n_heads + head) * tt;
        &self.probs[start..start + tt]
    }
}

struct Geometry {
    batch: usize,
    seq: usize,
    heads: usize,
    d: usize,
    dh: usize,
}

fn geometry<T: Scalar>(
    q: &Tensor2D<T>,
    k: &Tensor2D<T>,
    v: &Tensor2D<T>,
    seq_len: usize,
    n_heads: usize,
) -> Result<Geometry> {
    let (rows, d) = q.shape();
    if k.shape() != (rows, d) || v.shape() != (rows, d) {
        return Err(Error::shape("attention: q, k, v shapes differ"));
    }
    if seq_len == 0 || rows % seq_len != 0 {
        return Err(Error::shape(format!(
            "attention: {rows} rows is not a multiple of seq_len {seq_len}"
        )));
    }
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::shape(format!(
            "attention: width {d} not divisible by {n_heads} heads"
        )));
    }
    Ok(Geometry {
        batch: rows / seq_len,
        seq: seq_len,
        heads: n_heads,
        d,
        dh: d / n_heads,
    })
}

/// Strided sub-matrix product, `c = alpha * a * b + beta * c`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn block_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: (&[T], usize, isize, isize),
    b: (&[T], usize, isize, isize),
    beta: T,
    c: (&mut [T], usize, isize, isize),
) {
    let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows.saturating_sub(1)) as isize * rs + (cols.saturating_sub(1)) as isize * cs
    };
    assert!(a.1 as isize + span(m, k, a.2, a.3) < a.0.len() as isize);
    assert!(b.1 as isize + span(k, n, b.2, b.3) < b.0.len() as isize);
    assert!(c.1 as isize + span(m, n, c.2, c.3) < c.0.len() as isize);
    // SAFETY: the asserts above bound the last element touched in each
    // buffer; `c` is a unique borrow and cannot alias `a` or `b`.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr().add(a.1),
            a.2,
            a.3,
            b.0.as_ptr().add(b.1),
            b.2,
            b.3,
            beta,
            c.0.as_mut_ptr().add(c.1),
            c.2,
            c.3,
        );
    }
}

pub fn causal_attention<T: Scalar>(
    q: &Tensor2D<T>,
    k: &Tensor2D<T>,
    v: &Tensor2D<T>,
    seq_len: usize,
    n_heads: usize,
) -> Result<(Tensor2D<T>, AttentionCache<T>)> {
    let g = geometry(q, k, v, seq_len, n_heads)?;
    let (t, dh, d) = (g.seq, g.dh, g.d);
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut out = Tensor2D::zeros(q.rows(), d);
    let mut probs = vec![T::ZERO; g.batch * g.heads * t * t];
    let mut scores = vec![T::ZERO; t * t];
    for b in 0..g.batch {
        for h in 0..g.heads {
            let off = b * t * d + h * dh;
            block_gemm(
                t,
                dh,
                t,
                scale,
                (q.data(), off, d as isize, 1),
                (k.data(), off, 1, d as isize),
                T::ZERO,
                (&mut scores, 0, t as isize, 1),
            );
            let p = &mut probs[(b * g.heads + h) * t * t..(b * g.heads + h + 1) * t * t];
            for i in 0..t {
                super::ops::softmax_slice(&scores[i * t..i * t + i + 1], &mut p[i * t..i * t + i + 1]);
            }
            block_gemm(
                t,
                t,
                dh,
                T::ONE,
                (p, 0, t as isize, 1),
                (v.data(), off, d as isize, 1),
                T::ZERO,
                (out.data_mut(), off, d as isize, 1),
            );
        }
    }
    Ok((
        out,
        AttentionCache {
            probs,
            seq_len: t,
            n_heads: g.heads,
        },
    ))
}

/// Returns `(dq, dk, dv)`.
pub fn causal_attention_backward<T: Scalar>(
    q: &Tensor2D<T>,
    k: &Tensor2D<T>,
    v: &Tensor2D<T>,
    cache: &AttentionCache<T>,
    dout: &Tensor2D<T>,
) -> Result<(Tensor2D<T>, Tensor2D<T>, Tensor2D<T>)> {
    let g = geometry(q, k, v, cache.seq_len, cache.n_heads)?;
    if dout.shape() != q.shape() {
        return Err(Error::shape("attention backward: dout shape"));
    }
    let (t, dh, d) = (g.seq, g.dh, g.d);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Tensor2D::zeros(q.rows(), d);
    let mut dk = Tensor2D::zeros(q.rows(), d);
    let mut dv = Tensor2D::zeros(q.rows(), d);
    let mut dp = vec![T::ZERO; t * t];
    for b in 0..g.batch {
        for h in 0..g.heads {
            let off = b * t * d + h * dh;
            let p = cache.pattern(b, h);
            // dP = dO * V^T
            block_gemm(
                t,
                dh,
                t,
                T::ONE,
                (dout.data(), off, d as isize, 1),
                (v.data(), off, 1, d as isize),
                T::ZERO,
                (&mut dp, 0, t as isize, 1),
            );
            // dS = P * (dP - rowsum(dP * P)) * scale, in place over dP
            for i in 0..t {
                let row_p = &p[i * t..i * t + i + 1];
                let row_dp = &mut dp[i * t..(i + 1) * t];
                let s: f64 = row_p
                    .iter()
                    .zip(row_dp.iter())
                    .map(|(a, b)| a.to_f64() * b.to_f64())
                    .sum();
                for j in 0..t {
                    row_dp[j] = if j <= i {
                        T::from_f64(row_p[j].to_f64() * (row_dp[j].to_f64() - s) * scale)
                    } else {
                        T::ZERO
                    };
                }
            }
            // dQ = dS * K
            block_gemm(
                t,
                t,
                dh,
                T::ONE,
                (&dp, 0, t as isize, 1),
                (k.data(), off, d as isize, 1),
                T::ZERO,
                (dq.data_mut(), off, d as isize, 1),
            );
            // dK = dS^T * Q
            block_gemm(
                t,
                t,
                dh,
                T::ONE,
                (&dp, 0, 1, t as isize),
                (q.data(), off, d as isize, 1),
                T::ZERO,
                (dk.data_mut(), off, d as isize, 1),
            );
            // dV = P^T * dO
            block_gemm(
                t,
                t,
                dh,
                T::ONE,
                (p, 0, 1, t as isize),
                (dout.data(), off, d as isize, 1),
                T::ZERO,
                (dv.data_mut(), off, d as isize, 1),
            );
        }
    }
    Ok((dq, dk, dv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor2D<f64> {
        let mut s = seed;
        Tensor2D::from_fn(rows, cols, |_, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn first_position_copies_its_value() {
        let q = rand_tensor(6, 4, 1);
        let k = rand_tensor(6, 4, 2);
        let v = rand_tensor(6, 4, 3);
        let (out, cache) = causal_attention(&q, &k, &v, 3, 2).unwrap();
        // Row 0 of each sequence can only see itself.
        assert_eq!(out.row(0), v.row(0));
        assert_eq!(out.row(3), v.row(3));
        let p = cache.pattern(1, 1);
        assert_eq!(p[1], 0.0);
        assert!((p[3] + p[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn later_positions_do_not_leak_backwards() {
        let q = rand_tensor(5, 8, 4);
        let k = rand_tensor(5, 8, 5);
        let v = rand_tensor(5, 8, 6);
        let (base, _) = causal_attention(&q, &k, &v, 5, 2).unwrap();
        let (mut k2, mut v2, mut q2) = (k.clone(), v.clone(), q.clone());
        for c in 0..8 {
            k2.set(4, c, 9.0);
            v2.set(4, c, -9.0);
            q2.set(4, c, 3.0);
        }
        let (pert, _) = causal_attention(&q2, &k2, &v2, 5, 2).unwrap();
        for r in 0..4 {
            assert_eq!(base.row(r), pert.row(r));
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        let x = Tensor2D::<f32>::zeros(6, 6);
        assert!(causal_attention(&x, &x, &x, 4, 2).is_err());
        assert!(causal_attention(&x, &x, &x, 3, 4).is_err());
    }
}
