//! Elementwise nonlinearities, softmax and cross-entropy.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_in_place(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max-subtracted softmax, in place.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `-log softmax(logits)[label]`, computed as `logsumexp(z) - z[label]`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::dim(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericHealth(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    Ok(sum.ln() - (logits[label] - max))
}

/// Mean cross-entropy over a `[n, classes]` batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (rows, classes) = logits.dims2()?;
    if rows != labels.len() {
        return Err(Error::dim(format!(
            "{rows} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut grad = logits.clone();
    let mut total = 0.0;
    let inv = 1.0 / rows as f64;
    for (r, &label) in labels.iter().enumerate() {
        total += softmax_cross_entropy(logits.row(r), label)?;
        let row = grad.row_mut(r);
        softmax_in_place(row);
        row[label] -= 1.0;
        row.iter_mut().for_each(|g| *g *= inv);
    }
    debug_assert_eq!(grad.shape(), [rows, classes]);
    let loss = total * inv;
    if !loss.is_finite() {
        return Err(Error::NumericHealth(format!("non-finite loss {loss}")));
    }
    Ok((loss, grad))
}
