//! Received-pilot synthesis, zero-forcing estimation and the NMSE metric.

use ndarray::Zip;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

use super::channel::{cn, CArray3};
use super::interference::InterferenceSet;
use super::pilot::PilotGrid;

/// Pilot observation at the receiver:
/// `y = h·x + Σ_s power_scale_s·h_int_s·x_int_s + n0`, with `n0 ~ CN(0, noise_var)`
/// drawn element by element in `[m][n][k]` order from `seed`.
pub fn synth_received_pilot<T: Real>(
    h: &CArray3<T>,
    x: &PilotGrid<T>,
    ints: &InterferenceSet<T>,
    noise_var: f64,
    seed: u64,
) -> Result<CArray3<T>> {
    let (m, n, k) = h.dim();
    if x.len() != k {
        return Err(Error::Config(format!("pilot grid has {} symbols, channel has {k} REs", x.len())));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Config(format!("noise_var must be >= 0, got {noise_var}")));
    }
    ints.check_dims(m, n, k)?;
    let xs = x.symbols();
    let mut y = h.clone();
    for ((a, b, i), v) in y.indexed_iter_mut() {
        *v = *v * xs[i];
        for s in &ints.sources {
            *v = *v + s.gain(a, b, i) * s.x_int[i];
        }
    }
    if noise_var > 0.0 {
        let mut rng = rng_for(seed, Stream::Noise, 0);
        for v in y.iter_mut() {
            *v = *v + cn::<T, _>(&mut rng, noise_var);
        }
    }
    Ok(y)
}

/// Per-RE pilot division `y / x`.
pub fn zf_estimate<T: Real>(y: &CArray3<T>, x: &PilotGrid<T>) -> Result<CArray3<T>> {
    let k = y.dim().2;
    if x.len() != k {
        return Err(Error::Config(format!("pilot grid has {} symbols, estimate has {k} REs", x.len())));
    }
    let xs = x.symbols();
    let mut out = y.clone();
    for ((_, _, i), v) in out.indexed_iter_mut() {
        *v = *v / xs[i];
    }
    Ok(out)
}

/// `‖est − truth‖² / ‖truth‖²` over all entries.
pub fn nmse<T: Real>(est: &CArray3<T>, truth: &CArray3<T>) -> Result<T> {
    if est.dim() != truth.dim() {
        return Err(Error::Shape(format!("estimate {:?} vs truth {:?}", est.dim(), truth.dim())));
    }
    let mut err = T::zero();
    let mut energy = T::zero();
    Zip::from(est).and(truth).for_each(|&e, &t| {
        err += (e - t).norm_sqr();
        energy += t.norm_sqr();
    });
    if !(energy > T::zero()) {
        return Err(Error::UndefinedMetric("reference channel has zero energy".into()));
    }
    Ok(err / energy)
}

/// Mean of `|v|²` over all entries.
pub fn mean_power<T: Real>(a: &CArray3<T>) -> f64 {
    a.iter().map(|v: &Complex<T>| v.norm_sqr().as_f64()).sum::<f64>() / a.len().max(1) as f64
}
