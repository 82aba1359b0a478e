//! Co-channel interferers and the hexagonal layout that sets their relative
//! strength.

use ndarray::Array3;
use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

use super::channel::{draw_taps, tap_powers, CArray3, ChannelRealization};
use super::pilot::PilotGrid;
use super::scenario::CellScenario;

/// Direction of the link; decides which end interferers hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Single-antenna UEs in neighbour cells reach the serving BS array.
    Uplink,
    /// Neighbour base stations reach every antenna of the UE of interest.
    Downlink,
}

/// One aggregate interferer.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSource<T: Real> {
    /// `[m][n'][k]` with `n'` either 1 (broadcast over UE antennas) or `n`.
    pub h_int: CArray3<T>,
    /// Interferer pilot-phase symbols `[k]`.
    pub x_int: Vec<Complex<T>>,
    /// Linear amplitude gain; the source contributes `power_scale²` power.
    pub power_scale: T,
}

impl<T: Real> InterferenceSource<T> {
    pub fn new(h_int: CArray3<T>, x_int: Vec<Complex<T>>, power_scale: T) -> Result<Self> {
        if !(power_scale >= T::zero()) {
            return Err(Error::Config(format!("power_scale must be >= 0, got {power_scale}")));
        }
        if h_int.dim().2 != x_int.len() {
            return Err(Error::Config(format!(
                "interferer spans {} REs but carries {} symbols",
                h_int.dim().2,
                x_int.len()
            )));
        }
        Ok(InterferenceSource { h_int, x_int, power_scale })
    }

    /// Contribution at `[a][b][i]`, before the pilot/data symbol.
    #[inline]
    pub fn gain(&self, a: usize, b: usize, i: usize) -> Complex<T> {
        let b = if self.h_int.dim().1 == 1 { 0 } else { b };
        self.h_int[[a, b, i]] * self.power_scale
    }
}

/// All interferers affecting one link. May be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterferenceSet<T: Real> {
    pub sources: Vec<InterferenceSource<T>>,
}

impl<T: Real> InterferenceSet<T> {
    pub fn empty() -> Self {
        InterferenceSet { sources: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Checks every source against a `[m][n][k]` receive grid.
    pub fn check_dims(&self, m: usize, n: usize, k: usize) -> Result<()> {
        for (j, s) in self.sources.iter().enumerate() {
            let (sm, sn, sk) = s.h_int.dim();
            if sm != m || sk != k || !(sn == 1 || sn == n) || s.x_int.len() != k {
                return Err(Error::Config(format!(
                    "interferer {j} has shape [{sm}][{sn}][{sk}], receive grid is [{m}][{n}][{k}]"
                )));
            }
        }
        Ok(())
    }

    /// Copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for s in &mut out.sources {
            s.power_scale *= factor;
        }
        out
    }

    pub fn total_power(&self) -> f64 {
        self.sources.iter().map(|s| s.power_scale.as_f64().powi(2)).sum()
    }
}

/// Centres of the `n` cells: the serving cell at the origin, then the first
/// ring at distance `sqrt(3)` (unit cell radius).
pub fn cell_centres(n_cells: usize) -> Vec<(f64, f64)> {
    let mut c = vec![(0.0, 0.0)];
    let d = 3f64.sqrt();
    for j in 0..n_cells.saturating_sub(1) {
        let ang = std::f64::consts::PI / 6.0 + j as f64 * std::f64::consts::PI / 3.0;
        // Cells beyond the first ring land on the second ring.
        let ring = 1 + j / 6;
        c.push((ring as f64 * d * ang.cos(), ring as f64 * d * ang.sin()));
    }
    c
}

/// Relative interferer powers, normalised so they sum to the scenario's
/// total interference power.
///
/// Every cell drops `ues_per_cell` UEs uniformly in its disk; one is the
/// active UE. Uplink assumes full power control, so neighbour `j` arrives
/// with weight `(d_own / d_serving)^α`. Downlink weights each neighbour BS by
/// `(d_serving / d_j)^α` seen from the UE of interest.
pub fn interferer_powers(scenario: &CellScenario, link: Link, seed: u64) -> Vec<f64> {
    let n_int = scenario.n_cells.saturating_sub(1);
    if n_int == 0 {
        return Vec::new();
    }
    let mut rng = rng_for(seed, Stream::Geometry, 0);
    let centres = cell_centres(scenario.n_cells);
    let mut active = Vec::with_capacity(centres.len());
    for &(cx, cy) in &centres {
        let drops: Vec<(f64, f64)> = (0..scenario.ues_per_cell)
            .map(|_| {
                let r = (0.01 + 0.99 * rng.gen::<f64>()).sqrt();
                let t = rng.gen::<f64>() * std::f64::consts::TAU;
                (cx + r * t.cos(), cy + r * t.sin())
            })
            .collect();
        active.push(drops[rng.gen_range(0..drops.len())]);
    }
    let dist = |p: (f64, f64), q: (f64, f64)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
    let alpha = scenario.pathloss_exp;
    let weights: Vec<f64> = (1..centres.len())
        .map(|j| match link {
            Link::Uplink => (dist(active[j], centres[j]) / dist(active[j], centres[0])).powf(alpha),
            Link::Downlink => (dist(active[0], centres[0]) / dist(active[0], centres[j])).powf(alpha),
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let target = scenario.interference_power();
    weights.into_iter().map(|w| target * w / total).collect()
}

/// Draws the fixed interference environment of a deployment.
///
/// Each neighbour gets a tapped-delay-line channel with the scenario's delay
/// profile and a random QPSK pilot-phase sequence.
pub fn draw_interference<T: Real>(scenario: &CellScenario, link: Link, seed: u64) -> InterferenceSet<T> {
    let powers = interferer_powers(scenario, link, seed);
    let pdp = tap_powers(scenario.n_taps, scenario.decay_db_per_tap);
    let n_rx = match link {
        Link::Uplink => 1,
        Link::Downlink => scenario.ue_ant,
    };
    let sources = powers
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let mut rng = rng_for(seed, Stream::Interference, j as u64);
            let taps = draw_taps::<T>(scenario.bs_ant, n_rx, &pdp, &mut rng);
            let h_int = ChannelRealization::from_taps(taps, scenario.n_re).h;
            let x_int = PilotGrid::<T>::qpsk(scenario.n_re, rng.gen()).symbols().to_vec();
            InterferenceSource { h_int, x_int, power_scale: T::lit(p.sqrt()) }
        })
        .collect();
    InterferenceSet { sources }
}

/// A single flat interferer with the given per-RE value at unit gain.
pub fn constant_interferer<T: Real>(m: usize, k: usize, value: Complex<T>) -> InterferenceSource<T> {
    InterferenceSource {
        h_int: Array3::from_elem((m, 1, k), value),
        x_int: vec![Complex::new(T::one(), T::zero()); k],
        power_scale: T::one(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powers_sum_to_the_target_sir() {
        let s = CellScenario::default();
        for link in [Link::Uplink, Link::Downlink] {
            let p = interferer_powers(&s, link, 11);
            assert_eq!(p.len(), 6);
            assert!(p.iter().all(|&v| v > 0.0));
            let total: f64 = p.iter().sum();
            assert!((10.0 * total.log10() + s.carrier_sir_db).abs() < 1e-9);
        }
    }

    #[test]
    fn single_cell_has_no_interferers() {
        let s = CellScenario { n_cells: 1, ..Default::default() };
        assert!(draw_interference::<f64>(&s, Link::Uplink, 1).is_empty());
    }

    #[test]
    fn negative_power_rejected() {
        let h = Array3::from_elem((1, 1, 2), Complex::new(1.0, 0.0));
        let x = vec![Complex::new(1.0, 0.0); 2];
        assert!(InterferenceSource::new(h, x, -1.0).is_err());
    }

    #[test]
    fn shapes_follow_the_link() {
        let s = CellScenario::default();
        let ul = draw_interference::<f64>(&s, Link::Uplink, 2);
        let dl = draw_interference::<f64>(&s, Link::Downlink, 2);
        assert_eq!(ul.sources[0].h_int.dim(), (8, 1, 64));
        assert_eq!(dl.sources[0].h_int.dim(), (8, 2, 64));
        ul.check_dims(8, 2, 64).unwrap();
        dl.check_dims(8, 2, 64).unwrap();
        assert!(dl.check_dims(8, 3, 64).is_err());
    }
}
