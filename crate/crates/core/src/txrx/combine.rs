//! Linear receive combiners.

use ndarray::Array2;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

fn dot_h<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |s, (x, y)| s + x.conj() * y)
}

/// Maximum-ratio combining `hᴴy / hᴴh`.
pub fn mrc_combine<T: Real>(y: &[Complex<T>], h: &[Complex<T>]) -> Result<Complex<T>> {
    if y.len() != h.len() {
        return Err(Error::Shape(format!("{} observations for {} channel taps", y.len(), h.len())));
    }
    let g = dot_h(h, h).re;
    if !(g > T::zero()) {
        return Err(Error::Precondition("MRC with an all-zero channel".into()));
    }
    Ok(dot_h(h, y) / g)
}

/// Solves `R x = b` for Hermitian positive-definite `R` by Cholesky.
/// Returns `None` when a pivot is not strictly positive.
fn cholesky_solve<T: Real>(r: &Array2<Complex<T>>, b: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let m = b.len();
    let zero = Complex::new(T::zero(), T::zero());
    let mut l = vec![zero; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = r[[i, j]];
            for p in 0..j {
                s = s - l[i * m + p] * l[j * m + p].conj();
            }
            if i == j {
                if !(s.re > T::zero()) || !s.re.is_finite() {
                    return None;
                }
                l[i * m + i] = Complex::new(s.re.sqrt(), T::zero());
            } else {
                l[i * m + j] = s / l[j * m + j].re;
            }
        }
    }
    let mut z = vec![zero; m];
    for i in 0..m {
        let mut s = b[i];
        for p in 0..i {
            s = s - l[i * m + p] * z[p];
        }
        z[i] = s / l[i * m + i].re;
    }
    let mut x = vec![zero; m];
    for i in (0..m).rev() {
        let mut s = z[i];
        for p in i + 1..m {
            s = s - l[p * m + i].conj() * x[p];
        }
        x[i] = s / l[i * m + i].re;
    }
    Some(x)
}

/// IRC weights `w = R⁻¹h`, normalised so that `wᴴh = 1`.
///
/// A covariance that fails factorisation is retried once with diagonal
/// loading of `1e-6 · trace(R) / m`.
pub fn irc_weights<T: Real>(h: &[Complex<T>], r_uu: &Array2<Complex<T>>) -> Result<Vec<Complex<T>>> {
    let m = h.len();
    if r_uu.dim() != (m, m) {
        return Err(Error::Shape(format!("covariance {:?} for {m} antennas", r_uu.dim())));
    }
    let w = match cholesky_solve(r_uu, h) {
        Some(w) => w,
        None => {
            let trace: T = (0..m).map(|i| r_uu[[i, i]].re).sum();
            let load = T::lit(1e-6) * trace / T::lit(m as f64);
            let mut loaded = r_uu.clone();
            for i in 0..m {
                loaded[[i, i]] = loaded[[i, i]] + load;
            }
            cholesky_solve(&loaded, h)
                .ok_or_else(|| Error::Precondition("covariance not positive definite after loading".into()))?
        }
    };
    let g = dot_h(&w, h);
    if !(g.norm() > T::zero()) {
        return Err(Error::Precondition("IRC with an all-zero channel".into()));
    }
    let gc = g.conj();
    Ok(w.into_iter().map(|v| v / gc).collect())
}

/// Interference-rejection combining `wᴴy / wᴴh` with `w = R⁻¹h`.
pub fn irc_combine<T: Real>(y: &[Complex<T>], h: &[Complex<T>], r_uu: &Array2<Complex<T>>) -> Result<Complex<T>> {
    if y.len() != h.len() {
        return Err(Error::Shape(format!("{} observations for {} channel taps", y.len(), h.len())));
    }
    Ok(dot_h(&irc_weights(h, r_uu)?, y))
}

/// Output noise-plus-interference variance `wᴴRw` for unit-gain weights.
pub fn post_combining_variance<T: Real>(w: &[Complex<T>], r_uu: &Array2<Complex<T>>) -> f64 {
    let m = w.len();
    let mut acc = Complex::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            let wi = Complex::new(w[i].re.as_f64(), w[i].im.as_f64());
            let wj = Complex::new(w[j].re.as_f64(), w[j].im.as_f64());
            let r = Complex::new(r_uu[[i, j]].re.as_f64(), r_uu[[i, j]].im.as_f64());
            acc += wi.conj() * r * wj;
        }
    }
    acc.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::cn;
    use crate::seed::{rng_for, Stream};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn mrc_reference_cases() {
        assert_eq!(mrc_combine(&[c(0.3, -1.0)], &[c(1.0, 0.0)]).unwrap(), c(0.3, -1.0));
        let h = [c(0.5, 0.2), c(-1.0, 0.7), c(0.1, 0.1)];
        let s = c(0.6, -0.4);
        let y: Vec<_> = h.iter().map(|&v| v * s).collect();
        assert!((mrc_combine(&y, &h).unwrap() - s).norm() < 1e-14);
        assert!(mrc_combine(&[c(1.0, 0.0)], &[c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn irc_with_white_covariance_is_mrc() {
        let mut rng = rng_for(1, Stream::Channel, 0);
        let h: Vec<Complex<f64>> = (0..6).map(|_| cn(&mut rng, 1.0)).collect();
        let y: Vec<Complex<f64>> = (0..6).map(|_| cn(&mut rng, 1.0)).collect();
        let r = Array2::from_diag(&ndarray::Array1::from_elem(6, c(0.3, 0.0)));
        let a = irc_combine(&y, &h, &r).unwrap();
        let b = mrc_combine(&y, &h).unwrap();
        assert!((a - b).norm() < 1e-10);
        let r1 = Array2::from_elem((1, 1), c(2.0, 0.0));
        assert!((irc_combine(&y[..1], &h[..1], &r1).unwrap() - mrc_combine(&y[..1], &h[..1]).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn singular_covariance_falls_back_to_loading() {
        let v = [c(1.0, 0.0), c(0.0, 1.0)];
        let mut r = Array2::from_elem((2, 2), c(0.0, 0.0));
        for i in 0..2 {
            for j in 0..2 {
                r[[i, j]] = v[i] * v[j].conj();
            }
        }
        let h = [c(1.0, 0.0), c(0.0, -1.0)];
        let w = irc_weights(&h, &r).unwrap();
        assert!(w.iter().all(|x| x.re.is_finite() && x.im.is_finite()));
    }

    #[test]
    fn mrc_output_snr_is_sum_of_branch_snrs() {
        // Fixed channel, unit-power QPSK-like symbols, white noise σ²:
        // output SNR should approach Σ|h_a|²/σ².
        let h = [c(0.9, 0.1), c(-0.3, 0.5), c(0.2, -0.4), c(0.05, 0.7)];
        let nv = 0.5;
        let mut rng = rng_for(3, Stream::Noise, 0);
        let trials = 40_000;
        let mut err = 0.0;
        for _ in 0..trials {
            let s = c(1.0, 0.0);
            let y: Vec<_> = h.iter().map(|&g| g * s + cn::<f64, _>(&mut rng, nv)).collect();
            err += (mrc_combine(&y, &h).unwrap() - s).norm_sqr();
        }
        let measured = trials as f64 / err;
        let expected: f64 = h.iter().map(|g| g.norm_sqr() / nv).sum();
        assert!((measured / expected - 1.0).abs() < 0.03, "{measured} vs {expected}");
    }

    #[test]
    fn irc_beats_mrc_against_a_dominant_interferer() {
        let mut rng = rng_for(4, Stream::Channel, 0);
        let m = 4;
        let h: Vec<Complex<f64>> = (0..m).map(|_| cn(&mut rng, 1.0)).collect();
        let v: Vec<Complex<f64>> = (0..m).map(|_| cn(&mut rng, 1.0)).collect();
        let p_int = 10.0; // SIR -10 dB
        let nv = 0.01;
        let mut r = Array2::from_elem((m, m), c(0.0, 0.0));
        for i in 0..m {
            for j in 0..m {
                r[[i, j]] = v[i] * v[j].conj() * p_int + if i == j { c(nv, 0.0) } else { c(0.0, 0.0) };
            }
        }
        let w = irc_weights(&h, &r).unwrap();
        let (mut e_irc, mut e_mrc) = (0.0, 0.0);
        let mut nrng = rng_for(5, Stream::Noise, 0);
        for _ in 0..5000 {
            let i_sym = cn::<f64, _>(&mut nrng, p_int);
            let y: Vec<_> = (0..m).map(|a| h[a] + v[a] * i_sym + cn::<f64, _>(&mut nrng, nv)).collect();
            e_irc += (dot_h(&w, &y) - c(1.0, 0.0)).norm_sqr();
            e_mrc += (mrc_combine(&y, &h).unwrap() - c(1.0, 0.0)).norm_sqr();
        }
        assert!(e_irc * 10.0 < e_mrc, "irc {e_irc} mrc {e_mrc}");
        let predicted = post_combining_variance(&w, &r) * 5000.0;
        assert!((e_irc / predicted - 1.0).abs() < 0.1);
    }
}
