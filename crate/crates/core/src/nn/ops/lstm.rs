//! LSTM cell with exact backward pass.
//!
//! Gate layout inside every `4·hidden` row is `[input | forget | cell | output]`.
//! Weights are `w_x: [input, 4h]`, `w_h: [h, 4h]`, `b: [4h]`.

use super::activation::sigmoid;
use super::dense::{dense_backward, dense_forward};
use crate::error::{Error, Result};
use crate::nn::linalg::{gemm, Op};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_x: &'a [f64],
    pub w_h: &'a [f64],
    pub b: &'a [f64],
    pub input: usize,
    pub hidden: usize,
}

/// Per-timestep activations needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStep {
    /// Activated gates, `batch × 4h`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Applies gate nonlinearities to `pre` (`batch × 4h` pre-activations) and
/// advances the cell state.
pub(crate) fn lstm_gate_step(
    mut pre: Vec<f64>,
    c_prev: &[f64],
    batch: usize,
    hidden: usize,
) -> (Vec<f64>, Vec<f64>, LstmStep) {
    let h4 = 4 * hidden;
    let mut h = vec![0.0; batch * hidden];
    let mut c = vec![0.0; batch * hidden];
    let mut tanh_c = vec![0.0; batch * hidden];
    for b in 0..batch {
        let g = &mut pre[b * h4..(b + 1) * h4];
        for j in 0..hidden {
            let i_g = sigmoid(g[j]);
            let f_g = sigmoid(g[hidden + j]);
            let c_g = g[2 * hidden + j].tanh();
            let o_g = sigmoid(g[3 * hidden + j]);
            g[j] = i_g;
            g[hidden + j] = f_g;
            g[2 * hidden + j] = c_g;
            g[3 * hidden + j] = o_g;
            let k = b * hidden + j;
            c[k] = f_g * c_prev[k] + i_g * c_g;
            tanh_c[k] = c[k].tanh();
            h[k] = o_g * tanh_c[k];
        }
    }
    (
        h,
        c,
        LstmStep {
            gates: pre,
            c_prev: c_prev.to_vec(),
            tanh_c,
        },
    )
}

/// Given `dh`, `dc` w.r.t. this step's outputs, returns the gradient w.r.t.
/// the gate pre-activations and w.r.t. the previous cell state.
pub(crate) fn lstm_gate_step_backward(
    step: &LstmStep,
    dh: &[f64],
    dc: &[f64],
    batch: usize,
    hidden: usize,
) -> (Vec<f64>, Vec<f64>) {
    let h4 = 4 * hidden;
    let mut dpre = vec![0.0; batch * h4];
    let mut dc_prev = vec![0.0; batch * hidden];
    for b in 0..batch {
        let g = &step.gates[b * h4..(b + 1) * h4];
        let d = &mut dpre[b * h4..(b + 1) * h4];
        for j in 0..hidden {
            let k = b * hidden + j;
            let (i_g, f_g, c_g, o_g) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
            let tc = step.tanh_c[k];
            let dct = dc[k] + dh[k] * o_g * (1.0 - tc * tc);
            d[j] = dct * c_g * i_g * (1.0 - i_g);
            d[hidden + j] = dct * step.c_prev[k] * f_g * (1.0 - f_g);
            d[2 * hidden + j] = dct * i_g * (1.0 - c_g * c_g);
            d[3 * hidden + j] = dh[k] * tc * o_g * (1.0 - o_g);
            dc_prev[k] = dct * f_g;
        }
    }
    (dpre, dc_prev)
}

#[derive(Debug, Clone)]
pub struct LstmCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    step: LstmStep,
    batch: usize,
}

/// One LSTM step over a batch: returns `(h_t, c_t)` and the backward cache.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    batch: usize,
    w: &LstmWeights<'_>,
) -> (Vec<f64>, Vec<f64>, LstmCellCache) {
    let h4 = 4 * w.hidden;
    let mut pre = dense_forward(x, batch, w.input, w.w_x, w.b, h4);
    gemm(batch, w.hidden, h4, h_prev, Op::N, w.w_h, Op::N, &mut pre, true);
    let (h, c, step) = lstm_gate_step(pre, c_prev, batch, w.hidden);
    (
        h,
        c,
        LstmCellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            step,
            batch,
        },
    )
}

#[derive(Debug, Clone)]
pub struct LstmCellGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
    pub dw_x: Vec<f64>,
    pub dw_h: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn lstm_cell_backward(
    cache: &LstmCellCache,
    w: &LstmWeights<'_>,
    dh: &[f64],
    dc: &[f64],
) -> LstmCellGrads {
    let (batch, hidden) = (cache.batch, w.hidden);
    let h4 = 4 * hidden;
    let (dpre, dc_prev) = lstm_gate_step_backward(&cache.step, dh, dc, batch, hidden);
    let mut dw_x = vec![0.0; w.input * h4];
    let mut db = vec![0.0; h4];
    let dx = dense_backward(&cache.x, batch, w.input, w.w_x, h4, &dpre, &mut dw_x, &mut db, true);
    let mut dw_h = vec![0.0; hidden * h4];
    gemm(hidden, batch, h4, &cache.h_prev, Op::T, &dpre, Op::N, &mut dw_h, false);
    let mut dh_prev = vec![0.0; batch * hidden];
    gemm(batch, h4, hidden, &dpre, Op::N, w.w_h, Op::T, &mut dh_prev, false);
    LstmCellGrads {
        dx,
        dh_prev,
        dc_prev,
        dw_x,
        dw_h,
        db,
    }
}

/// Shape-checked single LSTM step on tensors: `x: [B, in]`, `h, c: [B, h]`.
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w_x: &Tensor,
    w_h: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (batch, input) = x.dims2()?;
    let (hb, hidden) = h_prev.dims2()?;
    let bad = hb != batch
        || c_prev.shape() != [batch, hidden]
        || w_x.shape() != [input, 4 * hidden]
        || w_h.shape() != [hidden, 4 * hidden]
        || b.shape() != [4 * hidden];
    if bad {
        return Err(Error::dim(format!(
            "lstm_cell: x {:?}, h {:?}, c {:?}, w_x {:?}, w_h {:?}, b {:?} are not congruent",
            x.shape(),
            h_prev.shape(),
            c_prev.shape(),
            w_x.shape(),
            w_h.shape(),
            b.shape()
        )));
    }
    let w = LstmWeights {
        w_x: w_x.data(),
        w_h: w_h.data(),
        b: b.data(),
        input,
        hidden,
    };
    let (h, c, _) = lstm_cell_forward(x.data(), h_prev.data(), c_prev.data(), batch, &w);
    Ok((
        Tensor::new(vec![batch, hidden], h)?,
        Tensor::new(vec![batch, hidden], c)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_and_state_are_a_fixed_point() {
        let (input, hidden) = (5, 3);
        let x = Tensor::from_fn(&[2, input], |i| i as f64 - 4.0);
        let (h, c) = lstm_cell(
            &x,
            &Tensor::zeros(&[2, hidden]),
            &Tensor::zeros(&[2, hidden]),
            &Tensor::zeros(&[input, 4 * hidden]),
            &Tensor::zeros(&[hidden, 4 * hidden]),
            &Tensor::zeros(&[4 * hidden]),
        )
        .unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn open_forget_gate_carries_cell_state() {
        // Large forget bias, large negative input bias: c_t ≈ c_{t-1}.
        let hidden = 2;
        let mut b = vec![0.0; 8];
        b[..2].fill(-50.0);
        b[2..4].fill(50.0);
        let (_, c) = lstm_cell(
            &Tensor::zeros(&[1, 1]),
            &Tensor::zeros(&[1, hidden]),
            &Tensor::matrix(1, 2, vec![0.7, -0.2]),
            &Tensor::zeros(&[1, 8]),
            &Tensor::zeros(&[hidden, 8]),
            &Tensor::vector(b),
        )
        .unwrap();
        assert!((c.data()[0] - 0.7).abs() < 1e-12);
        assert!((c.data()[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn incongruent_shapes_are_rejected() {
        let err = lstm_cell(
            &Tensor::zeros(&[1, 3]),
            &Tensor::zeros(&[1, 2]),
            &Tensor::zeros(&[1, 2]),
            &Tensor::zeros(&[3, 7]),
            &Tensor::zeros(&[2, 8]),
            &Tensor::zeros(&[8]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
