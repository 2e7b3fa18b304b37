use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Variance floor. Kept far below any realistic feature variance so normalized
/// rows have unit variance to ~1e-12.
pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub rows: usize,
    pub width: usize,
}

/// Normalizes each length-`width` row to zero mean and unit variance, then
/// applies `gamma`/`beta`.
pub fn layer_norm_forward(
    x: &[f64],
    rows: usize,
    width: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, LayerNormCache) {
    let mut xhat = vec![0.0; rows * width];
    let mut inv_std = vec![0.0; rows];
    let mut y = vec![0.0; rows * width];
    let n = width as f64;
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = is;
        for j in 0..width {
            let h = (row[j] - mean) * is;
            xhat[r * width + j] = h;
            y[r * width + j] = gamma[j] * h + beta[j];
        }
    }
    (
        y,
        LayerNormCache {
            xhat,
            inv_std,
            rows,
            width,
        },
    )
}

/// Accumulates `dgamma`, `dbeta`; returns `dx`.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gamma: &[f64],
    dy: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let (rows, width) = (cache.rows, cache.width);
    let n = width as f64;
    let mut dx = vec![0.0; rows * width];
    let mut dxhat = vec![0.0; width];
    for r in 0..rows {
        let xh = &cache.xhat[r * width..(r + 1) * width];
        let g = &dy[r * width..(r + 1) * width];
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for j in 0..width {
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
            dxhat[j] = g[j] * gamma[j];
            sum_d += dxhat[j];
            sum_dx += dxhat[j] * xh[j];
        }
        let mean_d = sum_d / n;
        let mean_dx = sum_dx / n;
        let is = cache.inv_std[r];
        for j in 0..width {
            dx[r * width + j] = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

/// Row-wise layer normalization of `x: [n, d]` with `gamma, beta: [d]`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (rows, width) = x.dims2()?;
    if gamma.shape() != [width] || beta.shape() != [width] {
        return Err(Error::dim(format!(
            "layer_norm: gamma {:?} / beta {:?} must be [{width}]",
            gamma.shape(),
            beta.shape()
        )));
    }
    let (y, _) = layer_norm_forward(x.data(), rows, width, gamma.data(), beta.data());
    Tensor::new(vec![rows, width], y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_standardized() {
        let x = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0]);
        let y = layer_norm(&x, &Tensor::filled(&[4], 1.0), &Tensor::zeros(&[4])).unwrap();
        for r in 0..2 {
            let row = y.row(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_row_maps_to_beta() {
        let x = Tensor::matrix(1, 3, vec![2.0; 3]);
        let y = layer_norm(&x, &Tensor::filled(&[3], 5.0), &Tensor::vector(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_gamma_shape_is_rejected() {
        let x = Tensor::zeros(&[1, 3]);
        assert!(layer_norm(&x, &Tensor::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }
}
