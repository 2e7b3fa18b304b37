//! Unmasked multi-head self-attention over fixed-length sequences.
//!
//! Tokens are stored as `[batch·seq, d]` rows; each sequence attends only
//! within itself. The key projection has no bias: adding a constant to every
//! score in a softmax row is a no-op, so a key bias would carry an identically
//! zero gradient.

use super::activation::softmax_in_place;
use super::dense::{dense_backward, dense_forward};
use crate::error::{Error, Result};
use crate::nn::linalg::{gemm, Op};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
    pub d: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities, `[batch, heads, seq, seq]`.
    probs: Vec<f64>,
    /// Concatenated head outputs before the output projection.
    mixed: Vec<f64>,
    batch: usize,
    seq: usize,
}

impl AttentionCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub dx: Vec<f64>,
    pub dwq: Vec<f64>,
    pub dbq: Vec<f64>,
    pub dwk: Vec<f64>,
    pub dwv: Vec<f64>,
    pub dbv: Vec<f64>,
    pub dwo: Vec<f64>,
    pub dbo: Vec<f64>,
}

pub fn attention_forward(
    x: &[f64],
    batch: usize,
    seq: usize,
    w: &AttentionWeights<'_>,
) -> (Vec<f64>, AttentionCache) {
    let (d, heads) = (w.d, w.heads);
    let dh = d / heads;
    let n = batch * seq;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = dense_forward(x, n, d, w.wq, w.bq, d);
    let mut k = vec![0.0; n * d];
    gemm(n, d, d, x, Op::N, w.wk, Op::N, &mut k, false);
    let v = dense_forward(x, n, d, w.wv, w.bv, d);

    let mut probs = vec![0.0; batch * heads * seq * seq];
    let mut mixed = vec![0.0; n * d];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * dh;
            let p_base = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let qi = &q[(b * seq + i) * d + off..][..dh];
                let row = &mut probs[p_base + i * seq..p_base + (i + 1) * seq];
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k[(b * seq + j) * d + off..][..dh];
                    *s = qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>() * scale;
                }
                softmax_in_place(row);
                let out = &mut mixed[(b * seq + i) * d + off..][..dh];
                for (j, &p) in row.iter().enumerate() {
                    let vj = &v[(b * seq + j) * d + off..][..dh];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
    let y = dense_forward(&mixed, n, d, w.wo, w.bo, d);
    (
        y,
        AttentionCache {
            x: x.to_vec(),
            q,
            k,
            v,
            probs,
            mixed,
            batch,
            seq,
        },
    )
}

pub fn attention_backward(
    cache: &AttentionCache,
    w: &AttentionWeights<'_>,
    dy: &[f64],
) -> AttentionGrads {
    let (d, heads, batch, seq) = (w.d, w.heads, cache.batch, cache.seq);
    let dh = d / heads;
    let n = batch * seq;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dwo = vec![0.0; d * d];
    let mut dbo = vec![0.0; d];
    let dmixed = dense_backward(&cache.mixed, n, d, w.wo, d, dy, &mut dwo, &mut dbo, true);

    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut dp = vec![0.0; seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * dh;
            let p_base = (b * heads + h) * seq * seq;
            for i in 0..seq {
                let p_row = &cache.probs[p_base + i * seq..p_base + (i + 1) * seq];
                let dout = &dmixed[(b * seq + i) * d + off..][..dh];
                for j in 0..seq {
                    let r = (b * seq + j) * d + off;
                    let vj = &cache.v[r..r + dh];
                    dp[j] = dout.iter().zip(vj).map(|(a, c)| a * c).sum();
                    for (g, &o) in dv[r..r + dh].iter_mut().zip(dout) {
                        *g += p_row[j] * o;
                    }
                }
                let dot: f64 = p_row.iter().zip(&dp).map(|(p, g)| p * g).sum();
                let qi_at = (b * seq + i) * d + off;
                for j in 0..seq {
                    let ds = p_row[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj_at = (b * seq + j) * d + off;
                    for c in 0..dh {
                        dq[qi_at + c] += ds * cache.k[kj_at + c];
                        dk[kj_at + c] += ds * cache.q[qi_at + c];
                    }
                }
            }
        }
    }

    let mut dwq = vec![0.0; d * d];
    let mut dbq = vec![0.0; d];
    let mut dx = dense_backward(&cache.x, n, d, w.wq, d, &dq, &mut dwq, &mut dbq, true);
    let mut dwk = vec![0.0; d * d];
    gemm(d, n, d, &cache.x, Op::T, &dk, Op::N, &mut dwk, false);
    gemm(n, d, d, &dk, Op::N, w.wk, Op::T, &mut dx, true);
    let mut dwv = vec![0.0; d * d];
    let mut dbv = vec![0.0; d];
    let dx_v = dense_backward(&cache.x, n, d, w.wv, d, &dv, &mut dwv, &mut dbv, true);
    for (a, b) in dx.iter_mut().zip(&dx_v) {
        *a += b;
    }
    AttentionGrads {
        dx,
        dwq,
        dbq,
        dwk,
        dwv,
        dbv,
        dwo,
        dbo,
    }
}

/// Owned attention parameters for the tensor-level API.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttentionParams {
    pub fn weights(&self, heads: usize) -> Result<AttentionWeights<'_>> {
        let (d, d2) = self.wq.dims2()?;
        if d != d2 {
            return Err(Error::dim(format!("attention: Wq must be square, got {d}x{d2}")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::dim(format!("attention: {heads} heads do not divide d={d}")));
        }
        for (name, t, shape) in [
            ("Wk", &self.wk, vec![d, d]),
            ("Wv", &self.wv, vec![d, d]),
            ("Wo", &self.wo, vec![d, d]),
            ("bq", &self.bq, vec![d]),
            ("bv", &self.bv, vec![d]),
            ("bo", &self.bo, vec![d]),
        ] {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(format!(
                    "attention: {name} shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(AttentionWeights {
            wq: self.wq.data(),
            bq: self.bq.data(),
            wk: self.wk.data(),
            wv: self.wv.data(),
            bv: self.bv.data(),
            wo: self.wo.data(),
            bo: self.bo.data(),
            d,
            heads,
        })
    }
}

/// Self-attention on `x: [seq, d]` or `x: [batch, seq, d]`; output has the same shape.
pub fn multi_head_attention(x: &Tensor, params: &AttentionParams, heads: usize) -> Result<Tensor> {
    let w = params.weights(heads)?;
    let (batch, seq, d) = match *x.shape() {
        [s, d] => (1, s, d),
        [b, s, d] => (b, s, d),
        _ => return Err(Error::dim(format!("attention input shape {:?}", x.shape()))),
    };
    if d != w.d {
        return Err(Error::dim(format!("attention: input width {d}, model width {}", w.d)));
    }
    let (y, _) = attention_forward(x.data(), batch, seq, &w);
    Tensor::new(x.shape().to_vec(), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, seed: f64) -> AttentionParams {
        let m = |k: f64| Tensor::from_fn(&[d, d], |i| ((i as f64 + k) * seed).sin() * 0.4);
        let v = |k: f64| Tensor::from_fn(&[d], |i| ((i as f64 + k) * seed).cos() * 0.1);
        AttentionParams {
            wq: m(1.0),
            bq: v(2.0),
            wk: m(3.0),
            wv: m(4.0),
            bv: v(5.0),
            wo: m(6.0),
            bo: v(7.0),
        }
    }

    #[test]
    fn single_token_reduces_to_value_then_output_projection() {
        let d = 4;
        let p = params(d, 0.77);
        let x = Tensor::matrix(1, d, vec![0.3, -1.2, 0.5, 2.0]);
        let y = multi_head_attention(&x, &p, 2).unwrap();
        let v = super::super::dense::dense(&x, &p.wv, &p.bv).unwrap();
        let want = super::super::dense::dense(&v, &p.wo, &p.bo).unwrap();
        assert!(y.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let d = 6;
        let p = params(d, 0.31);
        let x = Tensor::from_fn(&[2, 5, d], |i| (i as f64 * 0.13).sin());
        let w = p.weights(3).unwrap();
        let (_, cache) = attention_forward(x.data(), 2, 5, &w);
        for row in cache.probs().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sequences_in_a_batch_are_independent() {
        let d = 4;
        let p = params(d, 0.5);
        let a = Tensor::from_fn(&[1, 3, d], |i| (i as f64).cos());
        let b = Tensor::from_fn(&[1, 3, d], |i| (i as f64 * 2.0).sin());
        let mut both = a.data().to_vec();
        both.extend_from_slice(b.data());
        let joint = multi_head_attention(&Tensor::new(vec![2, 3, d], both).unwrap(), &p, 2).unwrap();
        let ya = multi_head_attention(&a, &p, 2).unwrap();
        assert!(joint.data()[..12]
            .iter()
            .zip(ya.data())
            .all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn heads_must_divide_width() {
        let p = params(6, 0.2);
        assert!(multi_head_attention(&Tensor::zeros(&[2, 6]), &p, 4).is_err());
    }
}
