//! Downlink coded link: one serving BS with a fixed uniform precoder, six
//! co-channel neighbour BSs, and a UE with `n` antennas.
//!
//! Per frame the UE holds an interfered estimate `H_I` of its `[m][n][k]`
//! channel plus a clean but stale reference from its store. Data symbols
//! ride one per resource element; the effective channel at UE antenna `r`
//! is `g[r][i] = Σ_a h[a][r][i] / sqrt(m)`.

use ndarray::{Array2, Axis};
use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::phy::{cn, CArray3, CellScenario, Deployment, EstimatePair, Link};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};
use crate::txrx::{bits_to_labels, irc_weights, mrc_combine, post_combining_variance, qam_soft_demod_var, QamOrder, TxChain};

/// Which stored clean estimate serves as the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    MostRecent,
    Mean,
}

/// Clean channel estimates collected earlier by the UE.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStore<T: Real> {
    pub clean_estimates: Vec<CArray3<T>>,
    pub policy: SelectionPolicy,
}

impl<T: Real> ReferenceStore<T> {
    pub fn new(clean_estimates: Vec<CArray3<T>>, policy: SelectionPolicy) -> Self {
        ReferenceStore { clean_estimates, policy }
    }

    pub fn select(&self) -> Result<CArray3<T>> {
        let last = self.clean_estimates.last().ok_or_else(|| Error::Empty("reference store is empty".into()))?;
        match self.policy {
            SelectionPolicy::MostRecent => Ok(last.clone()),
            SelectionPolicy::Mean => {
                let mut acc = last.clone();
                for e in &self.clean_estimates[..self.clean_estimates.len() - 1] {
                    if e.dim() != acc.dim() {
                        return Err(Error::Shape("stored estimates differ in shape".into()));
                    }
                    acc = acc + e;
                }
                let inv = T::lit(1.0 / self.clean_estimates.len() as f64);
                Ok(acc.mapv(|v| v * inv))
            }
        }
    }
}

/// One transmitted block and what the UE received.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedFrame<T: Real> {
    pub info_bits: Vec<u8>,
    pub codeword: Vec<u8>,
    pub interleaved: Vec<u8>,
    pub c_t: Vec<Complex<T>>,
    /// `[n][S]` received symbols per UE antenna.
    pub c_i: Array2<Complex<T>>,
    pub qam_order: QamOrder,
}

/// A frame with its channel estimates and class labels.
#[derive(Debug, Clone)]
pub struct DlSample<T: Real> {
    pub pair: EstimatePair<T>,
    pub frame: CodedFrame<T>,
    /// Constellation label of every transmitted symbol.
    pub labels: Vec<usize>,
    pub sinr_db: f64,
}

/// Receivers compared in the BLER study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Receiver {
    /// The trained network fed by symbols matched-filtered with the reference.
    ModularNn,
    Irc,
    Mrc,
    /// MRC with the clean reference channel and Gaussian LLRs; isolates how
    /// much the reference alone is worth.
    MrcRef,
}

impl Receiver {
    pub const ALL: [Receiver; 4] = [Receiver::ModularNn, Receiver::Irc, Receiver::Mrc, Receiver::MrcRef];

    pub fn name(self) -> &'static str {
        match self {
            Receiver::ModularNn => "modular_nn",
            Receiver::Irc => "irc",
            Receiver::Mrc => "mrc",
            Receiver::MrcRef => "mrc_ref",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

/// Sum over BS antennas, scaled by `1/sqrt(m)`: `[m][n][k]` to `[n][k]`.
pub fn effective_channel<T: Real>(h: &CArray3<T>) -> Array2<Complex<T>> {
    let m = h.dim().0;
    let s = T::lit(1.0 / (m as f64).sqrt());
    h.sum_axis(Axis(0)).mapv(|v| v * s)
}

/// The downlink at one interference level.
#[derive(Debug, Clone)]
pub struct DlLink<T: Real> {
    pub deployment: Deployment<T>,
    pub chain: TxChain,
    /// Interferer effective channels `[n][k]` at their current gain.
    q_eff: Vec<Array2<Complex<T>>>,
    /// Long-term interference-plus-noise covariance per RE.
    r_uu: Vec<Array2<Complex<T>>>,
    pub sinr_db: f64,
}

impl<T: Real> DlLink<T> {
    /// Requires one symbol per resource element.
    pub fn new(scenario: &CellScenario, chain: TxChain) -> Result<Self> {
        if chain.symbols_per_block() != scenario.n_re {
            return Err(Error::Config(format!(
                "a block carries {} symbols but the grid has {} REs",
                chain.symbols_per_block(),
                scenario.n_re
            )));
        }
        let deployment = Deployment::new(scenario, Link::Downlink)?;
        let sinr = scenario.sinr_db(true);
        Ok(Self::assemble(deployment, chain, sinr))
    }

    fn assemble(deployment: Deployment<T>, chain: TxChain, sinr_db: f64) -> Self {
        let s = &deployment.scenario;
        let (n, k) = (s.ue_ant, s.n_re);
        let q_eff: Vec<_> = deployment
            .interference
            .sources
            .iter()
            .map(|src| {
                let mut q = effective_channel(&src.h_int);
                q.mapv_inplace(|v| v * src.power_scale);
                q
            })
            .collect();
        let nv = T::lit(s.noise_var());
        let r_uu = (0..k)
            .map(|i| {
                Array2::from_shape_fn((n, n), |(a, b)| {
                    let mut v = q_eff.iter().fold(Complex::new(T::zero(), T::zero()), |acc, q| acc + q[[a, i]] * q[[b, i]].conj());
                    if a == b {
                        v.re += nv;
                    }
                    v
                })
            })
            .collect();
        DlLink { deployment, chain, q_eff, r_uu, sinr_db }
    }

    /// Same deployment with interference rescaled so that the per-antenna
    /// SINR `1 / (P_int + σ²)` equals `sinr_db`.
    pub fn at_sinr(&self, sinr_db: f64) -> Result<Self> {
        let nv = self.deployment.scenario.noise_var();
        let p = 10f64.powf(-sinr_db / 10.0) - nv;
        let current = self.deployment.interference.total_power();
        if !(p > 0.0) || current <= 0.0 {
            return Err(Error::Config(format!(
                "SINR {sinr_db} dB is unreachable at SNR {} dB with this interference",
                self.deployment.scenario.snr_db
            )));
        }
        let mut d = self.deployment.clone();
        d.interference = d.interference.scaled(T::lit((p / current).sqrt()));
        d.scenario.carrier_sir_db = -10.0 * p.log10();
        Ok(Self::assemble(d, self.chain.clone(), sinr_db))
    }

    pub fn interference_power(&self) -> f64 {
        self.deployment.interference.total_power()
    }

    /// Frame `index` of the stream seeded by `seed`.
    pub fn sample(&self, index: u64, seed: u64) -> Result<DlSample<T>> {
        let pair = self.deployment.frame(index, true, seed)?;
        let s = &self.deployment.scenario;
        let mut rng = rng_for(seed, Stream::Link, index);
        let info: Vec<u8> = (0..self.chain.code.k_info).map(|_| rng.gen_range(0..2)).collect();
        let (codeword, interleaved, c_t) = self.chain.transmit::<T>(&info)?;
        let g = effective_channel(&pair.h_true.h);
        let k = s.n_re;
        let qpsk = QamOrder::Qpsk.points::<T>();
        let data: Vec<Vec<Complex<T>>> =
            self.q_eff.iter().map(|_| (0..k).map(|_| qpsk[rng.gen_range(0..4)]).collect()).collect();
        let nv = s.noise_var();
        let c_i = Array2::from_shape_fn((s.ue_ant, k), |_| Complex::new(T::zero(), T::zero()));
        let mut c_i = c_i;
        for r in 0..s.ue_ant {
            for i in 0..k {
                let mut v = g[[r, i]] * c_t[i];
                for (q, d) in self.q_eff.iter().zip(&data) {
                    v = v + q[[r, i]] * d[i];
                }
                c_i[[r, i]] = v + cn::<T, _>(&mut rng, nv);
            }
        }
        let labels = bits_to_labels(&interleaved, self.chain.order)?;
        Ok(DlSample {
            pair,
            frame: CodedFrame { info_bits: info, codeword, interleaved, c_t, c_i, qam_order: self.chain.order },
            labels,
            sinr_db: self.sinr_db,
        })
    }

    /// Reference estimate for a sample: its own stale clean estimate.
    pub fn reference(&self, sample: &DlSample<T>) -> Result<CArray3<T>> {
        ReferenceStore::new(vec![sample.pair.h_clean_est.clone()], SelectionPolicy::MostRecent).select()
    }

    /// Symbols MRC-combined with the given channel estimate, and the
    /// white-noise LLR variance that goes with them.
    pub fn mrc_symbols(&self, sample: &DlSample<T>, h_est: &CArray3<T>) -> Result<(Vec<Complex<T>>, Vec<f64>)> {
        let g = effective_channel(h_est);
        let total = self.interference_power() + self.deployment.scenario.noise_var();
        let y = &sample.frame.c_i;
        let mut z = Vec::with_capacity(y.ncols());
        let mut var = Vec::with_capacity(y.ncols());
        for i in 0..y.ncols() {
            let gi = g.column(i).to_vec();
            z.push(mrc_combine(&y.column(i).to_vec(), &gi)?);
            let energy: f64 = gi.iter().map(|v| v.norm_sqr().as_f64()).sum();
            var.push(total / energy);
        }
        Ok((z, var))
    }

    /// Unnormalised matched-filter outputs `ĝᴴ y` per RE. Unlike
    /// [`Self::mrc_symbols`] they keep the per-RE channel gain, so the scale of
    /// each symbol tracks its reliability.
    pub fn matched_filter(&self, sample: &DlSample<T>, h_est: &CArray3<T>) -> Vec<Complex<T>> {
        let g = effective_channel(h_est);
        let y = &sample.frame.c_i;
        (0..y.ncols())
            .map(|i| g.column(i).iter().zip(y.column(i)).fold(Complex::new(T::zero(), T::zero()), |s, (a, b)| s + a.conj() * b))
            .collect()
    }

    /// Channel-order LLRs of a classical receiver.
    pub fn classical_llrs(&self, sample: &DlSample<T>, receiver: Receiver) -> Result<Vec<T>> {
        let (z, var) = match receiver {
            Receiver::Mrc => self.mrc_symbols(sample, &sample.pair.h_int_est)?,
            Receiver::MrcRef => self.mrc_symbols(sample, &self.reference(sample)?)?,
            Receiver::Irc => {
                let g = effective_channel(&sample.pair.h_int_est);
                let y = &sample.frame.c_i;
                let mut z = Vec::with_capacity(y.ncols());
                let mut var = Vec::with_capacity(y.ncols());
                for i in 0..y.ncols() {
                    let w = irc_weights(&g.column(i).to_vec(), &self.r_uu[i])?;
                    z.push(w.iter().zip(y.column(i)).fold(Complex::new(T::zero(), T::zero()), |s, (a, b)| s + a.conj() * b));
                    var.push(post_combining_variance(&w, &self.r_uu[i]));
                }
                (z, var)
            }
            Receiver::ModularNn => return Err(Error::Precondition("the network path needs a trained model".into())),
        };
        qam_soft_demod_var(&z, &var, self.chain.order)
    }
}
