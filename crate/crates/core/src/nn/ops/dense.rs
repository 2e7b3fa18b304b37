use crate::error::{Error, Result};
use crate::nn::linalg::{gemm, Op};
use crate::nn::tensor::Tensor;

/// `y = x·W + b` over `rows` inputs of width `input`; `w` is `input×output`.
pub fn dense_forward(
    x: &[f64],
    rows: usize,
    input: usize,
    w: &[f64],
    b: &[f64],
    output: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(rows * output);
    for _ in 0..rows {
        y.extend_from_slice(b);
    }
    gemm(rows, input, output, x, Op::N, w, Op::N, &mut y, true);
    y
}

/// Accumulates `dW += xᵀ·dy` and `db += Σ dy`; returns `dx = dy·Wᵀ`
/// when `want_dx` is set (empty otherwise).
#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    rows: usize,
    input: usize,
    w: &[f64],
    output: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Vec<f64> {
    gemm(input, rows, output, x, Op::T, dy, Op::N, dw, true);
    for r in 0..rows {
        for (acc, g) in db.iter_mut().zip(&dy[r * output..(r + 1) * output]) {
            *acc += g;
        }
    }
    if !want_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; rows * input];
    gemm(rows, output, input, dy, Op::N, w, Op::T, &mut dx, false);
    dx
}

fn dense_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let (rows, input) = x.dims2()?;
    let (w_in, output) = w.dims2()?;
    if w_in != input {
        return Err(Error::dim(format!(
            "dense: input width {input} does not match weight rows {w_in}"
        )));
    }
    if b.shape() != [output] {
        return Err(Error::dim(format!(
            "dense: bias shape {:?}, expected [{output}]",
            b.shape()
        )));
    }
    Ok((rows, input, output))
}

/// Affine map `y = x·W + b`, with `x: [n, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (rows, input, output) = dense_shapes(x, w, b)?;
    let y = dense_forward(x.data(), rows, input, w.data(), b.data(), output);
    Tensor::new(vec![rows, output], y)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn dense_grad(x: &Tensor, w: &Tensor, b: &Tensor, dy: &Tensor) -> Result<DenseGrads> {
    let (rows, input, output) = dense_shapes(x, w, b)?;
    if dy.shape() != [rows, output] {
        return Err(Error::dim(format!(
            "dense backward: upstream gradient shape {:?}, expected [{rows}, {output}]",
            dy.shape()
        )));
    }
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(b.shape());
    let dx = dense_backward(
        x.data(),
        rows,
        input,
        w.data(),
        output,
        dy.data(),
        dw.data_mut(),
        db.data_mut(),
        true,
    );
    Ok(DenseGrads {
        dx: Tensor::new(vec![rows, input], dx)?,
        dw,
        db,
    })
}
