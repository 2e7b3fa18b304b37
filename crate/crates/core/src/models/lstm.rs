//! Stacked LSTM classifier: BPTT over the full sequence, head on the last
//! top-layer hidden state.

use super::{LstmClassifierConfig, SequenceBatch};
use crate::error::Result;
use crate::nn::linalg::{gemm, Op};
use crate::nn::ops::dense::{dense_backward, dense_forward};
use crate::nn::ops::lstm::{lstm_gate_step, lstm_gate_step_backward, LstmStep};
use crate::nn::ops::softmax_cross_entropy_batch;
use crate::nn::{GradientSet, ParameterSet, Tensor};

struct LayerCache {
    /// Time-major layer input, `[T·B, in]`.
    x: Vec<f64>,
    /// Hidden state entering each step, `[T·B, h]`.
    h_prev: Vec<f64>,
    steps: Vec<LstmStep>,
}

pub(super) struct LstmForward {
    layers: Vec<LayerCache>,
    last_h: Vec<f64>,
    pub logits: Tensor,
}

pub(super) fn forward(
    c: &LstmClassifierConfig,
    params: &ParameterSet,
    batch: &SequenceBatch,
) -> Result<LstmForward> {
    let (b, t, h) = (batch.batch(), batch.seq_len(), c.hidden);
    let h4 = 4 * h;
    let mut x = batch.time_major();
    let mut input = c.input_dim;
    let mut layers = Vec::with_capacity(c.layers);
    for l in 0..c.layers {
        let w_x = params.get(&format!("lstm{l}.w_x"))?.data();
        let w_h = params.get(&format!("lstm{l}.w_h"))?.data();
        let bias = params.get(&format!("lstm{l}.b"))?.data();
        let pre_x = dense_forward(&x, t * b, input, w_x, bias, h4);
        let mut hs = vec![0.0; t * b * h];
        let mut h_prev = vec![0.0; t * b * h];
        let mut state_h = vec![0.0; b * h];
        let mut state_c = vec![0.0; b * h];
        let mut steps = Vec::with_capacity(t);
        for s in 0..t {
            let mut pre = pre_x[s * b * h4..(s + 1) * b * h4].to_vec();
            gemm(b, h, h4, &state_h, Op::N, w_h, Op::N, &mut pre, true);
            h_prev[s * b * h..(s + 1) * b * h].copy_from_slice(&state_h);
            let (nh, nc, step) = lstm_gate_step(pre, &state_c, b, h);
            hs[s * b * h..(s + 1) * b * h].copy_from_slice(&nh);
            state_h = nh;
            state_c = nc;
            steps.push(step);
        }
        layers.push(LayerCache { x, h_prev, steps });
        x = hs;
        input = h;
    }
    let last_h = x[(t - 1) * b * h..].to_vec();
    let head_w = params.get("head.w")?.data();
    let head_b = params.get("head.b")?.data();
    let logits = dense_forward(&last_h, b, h, head_w, head_b, c.classes);
    Ok(LstmForward {
        layers,
        last_h,
        logits: Tensor::matrix(b, c.classes, logits),
    })
}

pub(super) fn loss_and_gradients(
    c: &LstmClassifierConfig,
    params: &ParameterSet,
    batch: &SequenceBatch,
    labels: &[usize],
) -> Result<(f64, GradientSet)> {
    let fwd = forward(c, params, batch)?;
    let (loss, dlogits) = softmax_cross_entropy_batch(&fwd.logits, labels)?;
    let (b, t, h) = (batch.batch(), batch.seq_len(), c.hidden);
    let h4 = 4 * h;
    let mut grads = GradientSet::zeros_like(params);

    let mut dw = vec![0.0; h * c.classes];
    let mut db = vec![0.0; c.classes];
    let dlast = dense_backward(
        &fwd.last_h,
        b,
        h,
        params.get("head.w")?.data(),
        c.classes,
        dlogits.data(),
        &mut dw,
        &mut db,
        true,
    );
    grads.accumulate_slice("head.w", &dw)?;
    grads.accumulate_slice("head.b", &db)?;

    // Gradient w.r.t. the current layer's output sequence, time-major.
    let mut dout = vec![0.0; t * b * h];
    dout[(t - 1) * b * h..].copy_from_slice(&dlast);
    for l in (0..c.layers).rev() {
        let cache = &fwd.layers[l];
        let input = if l == 0 { c.input_dim } else { h };
        let w_x = params.get(&format!("lstm{l}.w_x"))?.data();
        let w_h = params.get(&format!("lstm{l}.w_h"))?.data();
        let mut dpre_all = vec![0.0; t * b * h4];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        for s in (0..t).rev() {
            let mut dh = dout[s * b * h..(s + 1) * b * h].to_vec();
            for (a, g) in dh.iter_mut().zip(&dh_next) {
                *a += g;
            }
            let (dpre, dc_prev) = lstm_gate_step_backward(&cache.steps[s], &dh, &dc_next, b, h);
            gemm(b, h4, h, &dpre, Op::N, w_h, Op::T, &mut dh_next, false);
            dc_next = dc_prev;
            dpre_all[s * b * h4..(s + 1) * b * h4].copy_from_slice(&dpre);
        }
        let mut dw_h = vec![0.0; h * h4];
        gemm(h, t * b, h4, &cache.h_prev, Op::T, &dpre_all, Op::N, &mut dw_h, false);
        let mut dw_x = vec![0.0; input * h4];
        let mut dbias = vec![0.0; h4];
        dout = dense_backward(&cache.x, t * b, input, w_x, h4, &dpre_all, &mut dw_x, &mut dbias, l > 0);
        grads.accumulate_slice(&format!("lstm{l}.w_x"), &dw_x)?;
        grads.accumulate_slice(&format!("lstm{l}.w_h"), &dw_h)?;
        grads.accumulate_slice(&format!("lstm{l}.b"), &dbias)?;
    }
    Ok((loss, grads))
}
