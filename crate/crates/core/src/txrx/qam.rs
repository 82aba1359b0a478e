//! Gray-mapped square QAM with unit average energy.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Supported constellation sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QamOrder {
    Qpsk,
    Qam16,
    Qam64,
}

impl QamOrder {
    pub fn from_order(q: usize) -> Result<Self> {
        match q {
            4 => Ok(QamOrder::Qpsk),
            16 => Ok(QamOrder::Qam16),
            64 => Ok(QamOrder::Qam64),
            _ => Err(Error::Config(format!("unsupported QAM order {q} (expected 4, 16 or 64)"))),
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            QamOrder::Qpsk => 2,
            QamOrder::Qam16 => 4,
            QamOrder::Qam64 => 6,
        }
    }

    /// Bit `j` (first bit = 0) of symbol label `q`.
    #[inline]
    pub fn bit(self, q: usize, j: usize) -> u8 {
        ((q >> (self.bits_per_symbol() - 1 - j)) & 1) as u8
    }

    /// Constellation point for label `q`; bits are read most significant
    /// first. Even-indexed bits drive I, odd-indexed bits drive Q.
    pub fn point<T: Real>(self, q: usize) -> Complex<T> {
        let s = |j: usize| 1.0 - 2.0 * self.bit(q, j) as f64;
        let (i, qv, norm) = match self {
            QamOrder::Qpsk => (s(0), s(1), 2f64),
            QamOrder::Qam16 => (s(0) * (2.0 - s(2)), s(1) * (2.0 - s(3)), 10.0),
            QamOrder::Qam64 => (s(0) * (4.0 - s(2) * (2.0 - s(4))), s(1) * (4.0 - s(3) * (2.0 - s(5))), 42.0),
        };
        let k = 1.0 / norm.sqrt();
        Complex::new(T::lit(i * k), T::lit(qv * k))
    }

    pub fn points<T: Real>(self) -> Vec<Complex<T>> {
        (0..self.order()).map(|q| self.point(q)).collect()
    }
}

/// Maps bits (MSB of each label first) to constellation points.
pub fn qam_modulate<T: Real>(bits: &[u8], order: QamOrder) -> Result<Vec<Complex<T>>> {
    let b = order.bits_per_symbol();
    if bits.len() % b != 0 {
        return Err(Error::Shape(format!("{} bits is not a multiple of {b}", bits.len())));
    }
    Ok(bits
        .chunks_exact(b)
        .map(|c| order.point(c.iter().fold(0usize, |q, &x| q << 1 | (x & 1) as usize)))
        .collect())
}

/// Symbol labels for a bit stream.
pub fn bits_to_labels(bits: &[u8], order: QamOrder) -> Result<Vec<usize>> {
    let b = order.bits_per_symbol();
    if bits.len() % b != 0 {
        return Err(Error::Shape(format!("{} bits is not a multiple of {b}", bits.len())));
    }
    Ok(bits.chunks_exact(b).map(|c| c.iter().fold(0usize, |q, &x| q << 1 | (x & 1) as usize)).collect())
}

/// Nearest-point labels.
pub fn qam_hard<T: Real>(symbols: &[Complex<T>], order: QamOrder) -> Vec<usize> {
    let pts = order.points::<T>();
    symbols
        .iter()
        .map(|y| {
            let mut best = (0, f64::INFINITY);
            for (q, p) in pts.iter().enumerate() {
                let d = (*y - *p).norm_sqr().as_f64();
                if d < best.1 {
                    best = (q, d);
                }
            }
            best.0
        })
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact bit LLRs `log P(b=0|y) / P(b=1|y)` under complex Gaussian noise with
/// a per-symbol variance.
pub fn qam_soft_demod_var<T: Real>(symbols: &[Complex<T>], noise_vars: &[f64], order: QamOrder) -> Result<Vec<T>> {
    if noise_vars.len() != symbols.len() {
        return Err(Error::Shape(format!("{} variances for {} symbols", noise_vars.len(), symbols.len())));
    }
    let pts = order.points::<f64>();
    let b = order.bits_per_symbol();
    let mut out = Vec::with_capacity(symbols.len() * b);
    let mut metric = vec![0.0; pts.len()];
    let (mut zero, mut one) = (Vec::with_capacity(pts.len()), Vec::with_capacity(pts.len()));
    for (y, &nv) in symbols.iter().zip(noise_vars) {
        let y = Complex::new(y.re.as_f64(), y.im.as_f64());
        let nv = nv.max(1e-300);
        for (m, p) in metric.iter_mut().zip(&pts) {
            *m = -(y - p).norm_sqr() / nv;
        }
        for j in 0..b {
            zero.clear();
            one.clear();
            for (q, &m) in metric.iter().enumerate() {
                if order.bit(q, j) == 0 {
                    zero.push(m)
                } else {
                    one.push(m)
                }
            }
            out.push(T::lit(log_sum_exp(&zero) - log_sum_exp(&one)));
        }
    }
    Ok(out)
}

pub fn qam_soft_demod<T: Real>(symbols: &[Complex<T>], noise_var: f64, order: QamOrder) -> Result<Vec<T>> {
    qam_soft_demod_var(symbols, &vec![noise_var; symbols.len()], order)
}

/// Max-log bit LLRs from per-symbol class scores (log-probabilities up to a
/// constant), laid out `[S][Q]`.
pub fn maxlog_llrs<T: Real>(scores: &[T], order: QamOrder) -> Result<Vec<T>> {
    let q = order.order();
    if scores.len() % q != 0 {
        return Err(Error::Shape(format!("{} scores is not a multiple of {q}", scores.len())));
    }
    let b = order.bits_per_symbol();
    let mut out = Vec::with_capacity(scores.len() / q * b);
    for row in scores.chunks_exact(q) {
        for j in 0..b {
            let (mut z, mut o) = (T::neg_infinity(), T::neg_infinity());
            for (c, &s) in row.iter().enumerate() {
                if order.bit(c, j) == 0 {
                    z = z.max(s);
                } else {
                    o = o.max(s);
                }
            }
            out.push(z - o);
        }
    }
    Ok(out)
}
