use ndarray::Array3;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::phy::CArray3;
use crate::scalar::Real;

/// `[m][n][k]` complex estimate to `[m·n][k][2]` real rows; antenna pair
/// `(a, b)` becomes row `a·n + b`.
pub fn preprocess<T: Real>(h: &CArray3<T>) -> Tensor<T> {
    let (m, n, k) = h.dim();
    let mut data = Vec::with_capacity(m * n * k * 2);
    for v in h.iter() {
        data.push(v.re);
        data.push(v.im);
    }
    Tensor::from_vec(&[m * n, k, 2], data).expect("row-major iteration covers the array")
}

/// Inverse of [`preprocess`].
pub fn postprocess<T: Real>(t: &Tensor<T>, m: usize, n: usize) -> Result<CArray3<T>> {
    let s = t.shape();
    if s.len() != 3 || s[0] != m * n || s[2] != 2 {
        return Err(Error::Shape(format!("cannot fold {s:?} into [{m}][{n}][k]")));
    }
    let vals: Vec<Complex<T>> = t.data().chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
    Array3::from_shape_vec((m, n, s[1]), vals).map_err(|e| Error::Shape(e.to_string()))
}

/// Rows of many frames stacked into one batch.
pub fn stack_rows<T: Real>(estimates: &[&CArray3<T>]) -> Result<Tensor<T>> {
    let parts: Vec<Tensor<T>> = estimates.iter().map(|h| preprocess(h)).collect();
    Tensor::concat_outer(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{gen_channel, CellScenario};

    #[test]
    fn shape_and_round_trip() {
        let s = CellScenario::default();
        let h = gen_channel::<f64>(&s, 1).h;
        let t = preprocess(&h);
        assert_eq!(t.shape(), &[16, 64, 2]);
        assert_eq!(t.data()[(3 * 64 + 5) * 2 + 1], h[[1, 1, 5]].im);
        assert_eq!(postprocess(&t, 8, 2).unwrap(), h);
        assert!(postprocess(&t, 4, 2).is_err());
    }

    #[test]
    fn single_pair_is_unchanged() {
        let h = Array3::from_shape_fn((1, 1, 5), |(_, _, i)| Complex::new(i as f64, -(i as f64)));
        let t = preprocess(&h);
        assert_eq!(t.shape(), &[1, 5, 2]);
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0]);
    }
}
