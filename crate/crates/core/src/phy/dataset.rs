//! Paired clean / interfered channel-estimate datasets.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_for, Stream};

use super::channel::{gen_channel, tap_powers, CArray3, ChannelRealization};
use super::interference::{draw_interference, InterferenceSet, Link};
use super::pilot::PilotGrid;
use super::scenario::CellScenario;
use super::signal::{mean_power, synth_received_pilot, zf_estimate};

/// One frame: ground truth plus the two estimates the BS could form.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatePair<T: Real> {
    pub h_true: ChannelRealization<T>,
    pub h_clean_est: CArray3<T>,
    pub h_int_est: CArray3<T>,
    /// Realised pilot-phase SINR of this frame.
    pub sinr_db: f64,
    /// Channel seed of this frame.
    pub seed: u64,
}

/// The slowly varying part of a deployment: pilots and interferers.
///
/// Derived from `scenario.seed` so that datasets drawn with different frame
/// seeds still share one interference environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment<T: Real> {
    pub scenario: CellScenario,
    pub link: Link,
    pub pilots: PilotGrid<T>,
    pub interference: InterferenceSet<T>,
}

impl<T: Real> Deployment<T> {
    pub fn new(scenario: &CellScenario, link: Link) -> Result<Self> {
        scenario.validate()?;
        Ok(Deployment {
            scenario: scenario.clone(),
            link,
            pilots: PilotGrid::qpsk(scenario.n_re, scenario.seed),
            interference: draw_interference(scenario, link, scenario.seed),
        })
    }

    /// Frame `index` of the stream seeded by `seed`.
    pub fn frame(&self, index: u64, interference_on: bool, seed: u64) -> Result<EstimatePair<T>> {
        let s = &self.scenario;
        let ch_seed = derive_seed(seed, Stream::Channel, index);
        let h_true = gen_channel::<T>(s, ch_seed);
        let clean_channel = match s.staleness {
            Some(rho) => {
                let mut rng = rng_for(seed, Stream::Staleness, index);
                h_true.perturbed(rho, &mut rng, &tap_powers(s.n_taps, s.decay_db_per_tap))
            }
            None => h_true.clone(),
        };
        let nv = s.noise_var();
        let none = InterferenceSet::empty();
        let ints = if interference_on { &self.interference } else { &none };
        let y_clean = synth_received_pilot(
            &clean_channel.h,
            &self.pilots,
            &none,
            nv,
            derive_seed(seed, Stream::Noise, 2 * index),
        )?;
        let y_int = synth_received_pilot(
            &h_true.h,
            &self.pilots,
            ints,
            nv,
            derive_seed(seed, Stream::Noise, 2 * index + 1),
        )?;
        let (m, n, k) = h_true.dims();
        let signal = mean_power(&h_true.h);
        let mut interference = 0.0;
        for src in &ints.sources {
            let mut acc = 0.0;
            for a in 0..m {
                for b in 0..n {
                    for i in 0..k {
                        let g: Complex<T> = src.gain(a, b, i);
                        acc += g.norm_sqr().as_f64();
                    }
                }
            }
            interference += acc / (m * n * k) as f64;
        }
        Ok(EstimatePair {
            h_clean_est: zf_estimate(&y_clean, &self.pilots)?,
            h_int_est: zf_estimate(&y_int, &self.pilots)?,
            sinr_db: 10.0 * (signal / (interference + nv)).log10(),
            h_true,
            seed: ch_seed,
        })
    }

    /// Frames `0..n_frames`, generated in parallel; the result does not
    /// depend on scheduling.
    pub fn frames(&self, n_frames: usize, interference_on: bool, seed: u64) -> Result<Vec<EstimatePair<T>>> {
        if n_frames == 0 {
            return Err(Error::Precondition("n_frames must be >= 1".into()));
        }
        (0..n_frames as u64)
            .into_par_iter()
            .map(|f| self.frame(f, interference_on, seed))
            .collect()
    }
}

/// Uplink dataset of `n_frames` frames.
///
/// Every frame draws a fresh channel and fresh noise; pilots and the
/// interferer set come from `scenario.seed` and stay fixed.
pub fn make_dataset<T: Real>(
    scenario: &CellScenario,
    n_frames: usize,
    interference_on: bool,
    seed: u64,
) -> Result<Vec<EstimatePair<T>>> {
    Deployment::new(scenario, Link::Uplink)?.frames(n_frames, interference_on, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::signal::nmse;

    fn mean_nmse(set: &[EstimatePair<f64>], clean: bool) -> f64 {
        set.iter()
            .map(|p| nmse(if clean { &p.h_clean_est } else { &p.h_int_est }, &p.h_true.h).unwrap())
            .sum::<f64>()
            / set.len() as f64
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = CellScenario::default();
        let a = make_dataset::<f64>(&s, 100, true, 3).unwrap();
        let b = make_dataset::<f64>(&s, 100, true, 3).unwrap();
        assert_eq!(a, b);
        let c = make_dataset::<f64>(&s, 2, true, 4).unwrap();
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn interference_off_leaves_only_noise() {
        let s = CellScenario::default();
        let set = make_dataset::<f64>(&s, 40, false, 1).unwrap();
        let (a, b) = (mean_nmse(&set, true), mean_nmse(&set, false));
        let nv = s.noise_var();
        assert!((a - nv).abs() < 0.1 * nv && (b - nv).abs() < 0.1 * nv, "{a} {b} {nv}");
        assert!((set[0].sinr_db - s.snr_db).abs() < 3.0);
    }

    #[test]
    fn strong_interference_dominates_noise() {
        let s = CellScenario { carrier_sir_db: 0.0, snr_db: 30.0, ..Default::default() };
        let set = make_dataset::<f64>(&s, 50, true, 2).unwrap();
        assert!(mean_nmse(&set, false) > mean_nmse(&set, true) * 10.0);
    }

    #[test]
    fn nmse_grows_with_interferer_power() {
        let s = CellScenario::default();
        let base = Deployment::<f64>::new(&s, Link::Uplink).unwrap();
        let mut last = 0.0;
        for scale in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let mut d = base.clone();
            d.interference = base.interference.scaled(scale);
            let set = d.frames(30, true, 8).unwrap();
            let v = mean_nmse(&set, false);
            assert!(v >= last, "scale {scale}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn staleness_decorrelates_the_clean_estimate() {
        let fresh = CellScenario { snr_db: 40.0, ..Default::default() };
        let stale = CellScenario { staleness: Some(0.9), ..fresh.clone() };
        let a = mean_nmse(&make_dataset::<f64>(&fresh, 30, true, 5).unwrap(), true);
        let b = mean_nmse(&make_dataset::<f64>(&stale, 30, true, 5).unwrap(), true);
        // E‖ρh + sqrt(1-ρ²)h' - h‖² / E‖h‖² = 2(1-ρ) = 0.2
        assert!(a < 1e-3 && (b - 0.2).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(make_dataset::<f64>(&CellScenario::default(), 0, true, 1).is_err());
    }
}
