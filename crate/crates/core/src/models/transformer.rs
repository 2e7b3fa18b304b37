//! Transformer-encoder classifier: input projection, sinusoidal positions,
//! post-norm encoder layers, mean pooling over time, linear head.

use super::{SequenceBatch, TransformerClassifierConfig};
use crate::error::Result;
use crate::nn::ops::activation::{relu_backward_in_place, relu_in_place};
use crate::nn::ops::attention::{
    attention_backward, attention_forward, AttentionCache, AttentionWeights,
};
use crate::nn::ops::dense::{dense_backward, dense_forward};
use crate::nn::ops::layer_norm::{layer_norm_backward, layer_norm_forward, LayerNormCache};
use crate::nn::ops::{positional_encoding, softmax_cross_entropy_batch};
use crate::nn::{GradientSet, ParameterSet, Tensor};

struct EncoderCache {
    attn: AttentionCache,
    ln1: LayerNormCache,
    /// Output of the first sublayer (input to the feed-forward block).
    h1: Vec<f64>,
    /// ReLU activations of the feed-forward hidden layer.
    act: Vec<f64>,
    ln2: LayerNormCache,
}

pub(super) struct TransformerForward {
    layers: Vec<EncoderCache>,
    pooled: Vec<f64>,
    pub logits: Tensor,
}

fn attn_weights<'a>(
    params: &'a ParameterSet,
    l: usize,
    c: &TransformerClassifierConfig,
) -> Result<AttentionWeights<'a>> {
    let g = |m: &str| -> Result<&'a [f64]> { Ok(params.get(&format!("enc{l}.attn.{m}"))?.data()) };
    Ok(AttentionWeights {
        wq: g("wq")?,
        bq: g("bq")?,
        wk: g("wk")?,
        wv: g("wv")?,
        bv: g("bv")?,
        wo: g("wo")?,
        bo: g("bo")?,
        d: c.d_model,
        heads: c.heads,
    })
}

fn p<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a [f64]> {
    Ok(params.get(name)?.data())
}

pub(super) fn forward(
    c: &TransformerClassifierConfig,
    params: &ParameterSet,
    batch: &SequenceBatch,
) -> Result<TransformerForward> {
    let (b, t, d, f) = (batch.batch(), batch.seq_len(), c.d_model, c.feedforward_dim);
    let n = b * t;
    let mut h = dense_forward(batch.data(), n, c.input_dim, p(params, "input.w")?, p(params, "input.b")?, d);
    let pe = positional_encoding(t, d);
    for (r, row) in h.chunks_exact_mut(d).enumerate() {
        for (v, e) in row.iter_mut().zip(pe.row(r % t)) {
            *v += e;
        }
    }
    let mut layers = Vec::with_capacity(c.encoder_layers);
    for l in 0..c.encoder_layers {
        let w = attn_weights(params, l, c)?;
        let (a, attn) = attention_forward(&h, b, t, &w);
        let r1: Vec<f64> = h.iter().zip(&a).map(|(x, y)| x + y).collect();
        let (h1, ln1) = layer_norm_forward(
            &r1,
            n,
            d,
            p(params, &format!("enc{l}.ln1.gamma"))?,
            p(params, &format!("enc{l}.ln1.beta"))?,
        );
        let mut act = dense_forward(
            &h1,
            n,
            d,
            p(params, &format!("enc{l}.ff1.w"))?,
            p(params, &format!("enc{l}.ff1.b"))?,
            f,
        );
        relu_in_place(&mut act);
        let ff = dense_forward(
            &act,
            n,
            f,
            p(params, &format!("enc{l}.ff2.w"))?,
            p(params, &format!("enc{l}.ff2.b"))?,
            d,
        );
        let r2: Vec<f64> = h1.iter().zip(&ff).map(|(x, y)| x + y).collect();
        let (h2, ln2) = layer_norm_forward(
            &r2,
            n,
            d,
            p(params, &format!("enc{l}.ln2.gamma"))?,
            p(params, &format!("enc{l}.ln2.beta"))?,
        );
        layers.push(EncoderCache {
            attn,
            ln1,
            h1,
            act,
            ln2,
        });
        h = h2;
    }
    let mut pooled = vec![0.0; b * d];
    let inv_t = 1.0 / t as f64;
    for i in 0..b {
        let out = &mut pooled[i * d..(i + 1) * d];
        for s in 0..t {
            for (o, v) in out.iter_mut().zip(&h[(i * t + s) * d..(i * t + s + 1) * d]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v *= inv_t);
    }
    let logits = dense_forward(&pooled, b, d, p(params, "head.w")?, p(params, "head.b")?, c.classes);
    Ok(TransformerForward {
        layers,
        pooled,
        logits: Tensor::matrix(b, c.classes, logits),
    })
}

pub(super) fn loss_and_gradients(
    c: &TransformerClassifierConfig,
    params: &ParameterSet,
    batch: &SequenceBatch,
    labels: &[usize],
) -> Result<(f64, GradientSet)> {
    let fwd = forward(c, params, batch)?;
    let (loss, dlogits) = softmax_cross_entropy_batch(&fwd.logits, labels)?;
    let (b, t, d, f) = (batch.batch(), batch.seq_len(), c.d_model, c.feedforward_dim);
    let n = b * t;
    let mut grads = GradientSet::zeros_like(params);

    let mut dw = vec![0.0; d * c.classes];
    let mut db = vec![0.0; c.classes];
    let dpooled = dense_backward(
        &fwd.pooled,
        b,
        d,
        p(params, "head.w")?,
        c.classes,
        dlogits.data(),
        &mut dw,
        &mut db,
        true,
    );
    grads.accumulate_slice("head.w", &dw)?;
    grads.accumulate_slice("head.b", &db)?;

    let inv_t = 1.0 / t as f64;
    let mut dh = vec![0.0; n * d];
    for (r, row) in dh.chunks_exact_mut(d).enumerate() {
        let src = &dpooled[(r / t) * d..(r / t + 1) * d];
        for (g, s) in row.iter_mut().zip(src) {
            *g = s * inv_t;
        }
    }

    for l in (0..c.encoder_layers).rev() {
        let cache = &fwd.layers[l];
        let name = |s: &str| format!("enc{l}.{s}");

        let mut dg = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let dr2 = layer_norm_backward(&cache.ln2, p(params, &name("ln2.gamma"))?, &dh, &mut dg, &mut dbeta);
        grads.accumulate_slice(&name("ln2.gamma"), &dg)?;
        grads.accumulate_slice(&name("ln2.beta"), &dbeta)?;

        let mut dw2 = vec![0.0; f * d];
        let mut db2 = vec![0.0; d];
        let mut dact = dense_backward(&cache.act, n, f, p(params, &name("ff2.w"))?, d, &dr2, &mut dw2, &mut db2, true);
        relu_backward_in_place(&cache.act, &mut dact);
        let mut dw1 = vec![0.0; d * f];
        let mut db1 = vec![0.0; f];
        let dh1_ff = dense_backward(&cache.h1, n, d, p(params, &name("ff1.w"))?, f, &dact, &mut dw1, &mut db1, true);
        grads.accumulate_slice(&name("ff2.w"), &dw2)?;
        grads.accumulate_slice(&name("ff2.b"), &db2)?;
        grads.accumulate_slice(&name("ff1.w"), &dw1)?;
        grads.accumulate_slice(&name("ff1.b"), &db1)?;
        let dh1: Vec<f64> = dr2.iter().zip(&dh1_ff).map(|(a, b)| a + b).collect();

        let mut dg = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let dr1 = layer_norm_backward(&cache.ln1, p(params, &name("ln1.gamma"))?, &dh1, &mut dg, &mut dbeta);
        grads.accumulate_slice(&name("ln1.gamma"), &dg)?;
        grads.accumulate_slice(&name("ln1.beta"), &dbeta)?;

        let w = attn_weights(params, l, c)?;
        let ag = attention_backward(&cache.attn, &w, &dr1);
        for (m, g) in [
            ("wq", &ag.dwq),
            ("bq", &ag.dbq),
            ("wk", &ag.dwk),
            ("wv", &ag.dwv),
            ("bv", &ag.dbv),
            ("wo", &ag.dwo),
            ("bo", &ag.dbo),
        ] {
            grads.accumulate_slice(&name(&format!("attn.{m}")), g)?;
        }
        dh = dr1.iter().zip(&ag.dx).map(|(a, b)| a + b).collect();
    }

    let mut dw_in = vec![0.0; c.input_dim * d];
    let mut db_in = vec![0.0; d];
    dense_backward(batch.data(), n, c.input_dim, p(params, "input.w")?, d, &dh, &mut dw_in, &mut db_in, false);
    grads.accumulate_slice("input.w", &dw_in)?;
    grads.accumulate_slice("input.b", &db_in)?;
    Ok((loss, grads))
}
