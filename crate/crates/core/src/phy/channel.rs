//! Rayleigh tapped-delay-line channels with an exponential power-delay
//! profile, evaluated on `k` uniformly spaced tones.

use ndarray::{Array3, Axis};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;
use crate::seed::{rng_for, SimRng, Stream};

use super::scenario::CellScenario;

/// Complex array indexed `[bs antenna][ue antenna][resource element]`.
pub type CArray3<T> = Array3<Complex<T>>;

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn cn<T: Real, R: Rng>(rng: &mut R, var: f64) -> Complex<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// Normalised tap powers: `p_l ∝ 10^(-decay·l/10)`, `Σ p_l = 1`.
pub fn tap_powers(n_taps: usize, decay_db: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n_taps).map(|l| 10f64.powf(-decay_db * l as f64 / 10.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Frequency response of one tap vector on `k` tones:
/// `H[i] = Σ_l tap[l]·exp(-j2π·l·i/k)`.
pub fn taps_to_response<T: Real>(taps: &[Complex<T>], k: usize) -> Vec<Complex<T>> {
    (0..k)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(l, &t)| {
                    let phase = -2.0 * std::f64::consts::PI * (l * i % k) as f64 / k as f64;
                    t * Complex::new(T::lit(phase.cos()), T::lit(phase.sin()))
                })
                .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
        })
        .collect()
}

/// One channel draw: taps and the frequency response they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    /// `[m][n][k]` frequency response.
    pub h: CArray3<T>,
    /// `[m][n][L]` delay taps.
    pub taps: CArray3<T>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn from_taps(taps: CArray3<T>, k: usize) -> Self {
        let (m, n, _) = taps.dim();
        let mut h = Array3::from_elem((m, n, k), Complex::new(T::zero(), T::zero()));
        for a in 0..m {
            for b in 0..n {
                let t: Vec<_> = taps.index_axis(Axis(0), a).index_axis(Axis(0), b).to_vec();
                for (i, v) in taps_to_response(&t, k).into_iter().enumerate() {
                    h[[a, b, i]] = v;
                }
            }
        }
        ChannelRealization { h, taps }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.h.dim()
    }

    /// Channel correlated with `self` by `rho`: `rho·taps + sqrt(1-rho²)·fresh`.
    pub fn perturbed(&self, rho: f64, rng: &mut SimRng, powers: &[f64]) -> Self {
        let (m, n, l) = self.taps.dim();
        let fresh = draw_taps::<T>(m, n, powers, rng);
        debug_assert_eq!(l, powers.len());
        let a = T::lit(rho);
        let b = T::lit((1.0 - rho * rho).max(0.0).sqrt());
        let taps = ndarray::Zip::from(&self.taps)
            .and(&fresh)
            .map_collect(|&x, &y| x * a + y * b);
        Self::from_taps(taps, self.h.dim().2)
    }
}

pub fn draw_taps<T: Real>(m: usize, n: usize, powers: &[f64], rng: &mut SimRng) -> CArray3<T> {
    let mut taps = Array3::from_elem((m, n, powers.len()), Complex::new(T::zero(), T::zero()));
    for a in 0..m {
        for b in 0..n {
            for (l, &p) in powers.iter().enumerate() {
                taps[[a, b, l]] = cn(rng, p);
            }
        }
    }
    taps
}

/// Draw a channel for every (BS antenna, UE antenna) pair of `scenario`.
///
/// Taps are i.i.d. complex Gaussian with unit total average power per pair.
pub fn gen_channel<T: Real>(scenario: &CellScenario, seed: u64) -> ChannelRealization<T> {
    let powers = tap_powers(scenario.n_taps, scenario.decay_db_per_tap);
    let mut rng = rng_for(seed, Stream::Channel, 0);
    let taps = draw_taps(scenario.bs_ant, scenario.ue_ant, &powers, &mut rng);
    ChannelRealization::from_taps(taps, scenario.n_re)
}
