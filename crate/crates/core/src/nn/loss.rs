//! Scalar losses returning their value together with `dL/dpred`.

use crate::error::{shape_err, Result};
use crate::scalar::Real;

use super::tensor::Tensor;

/// Mean squared error over all elements.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.same_shape(target, "mse")?;
    let n = T::lit(pred.len().max(1) as f64);
    let diff = pred.sub(target)?;
    let loss = diff.sum_sq() / n;
    let mut grad = diff;
    grad.scale(T::lit(2.0) / n);
    Ok((loss, grad))
}

/// Numerically stable log-softmax of each row of a `[rows][classes]` buffer.
pub fn log_softmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

/// Softmax cross-entropy averaged over rows; `logits` is `[..][classes]`
/// with one label per row.
pub fn cross_entropy_loss<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let q = logits.last_dim();
    let rows = logits.leading();
    if labels.len() != rows {
        return Err(shape_err!("{} labels for {} logit rows", labels.len(), rows));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= q) {
        return Err(shape_err!("class index {bad} out of range for {q} classes"));
    }
    let lp = log_softmax_rows(logits.data(), q);
    let n = T::lit(rows.max(1) as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(lp.len());
    for (r, &label) in lp.chunks_exact(q).zip(labels) {
        loss -= r[label];
        for (c, &v) in r.iter().enumerate() {
            let p = v.exp();
            let y = if c == label { T::one() } else { T::zero() };
            grad.push((p - y) / n);
        }
    }
    Ok((loss / n, Tensor::from_vec(logits.shape(), grad)?))
}
