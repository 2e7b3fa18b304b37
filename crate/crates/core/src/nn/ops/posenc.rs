use crate::nn::tensor::Tensor;

/// Fixed sinusoidal table of shape `[seq_len, d]`:
/// `PE(pos, 2i) = sin(pos / 10000^(2i/d))`, `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(seq_len: usize, d: usize) -> Tensor {
    Tensor::from_fn(&[seq_len, d], |idx| {
        let pos = (idx / d) as f64;
        let col = idx % d;
        let even = (col - col % 2) as f64;
        let angle = pos / 10000f64.powf(even / d as f64);
        if col.is_multiple_of(2) {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_row_alternates_zero_one() {
        let pe = positional_encoding(3, 6);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn first_pair_is_plain_sin_cos_of_position() {
        let pe = positional_encoding(20, 16);
        for pos in 0..20 {
            let p = pos as f64;
            assert!((pe.row(pos)[0] - p.sin()).abs() < 1e-15);
            assert!((pe.row(pos)[1] - p.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn values_are_bounded() {
        let pe = positional_encoding(20, 128);
        assert!(pe.data().iter().all(|v| v.abs() <= 1.0));
    }
}
