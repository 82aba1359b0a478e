use crate::error::{Error, Result};

/// Deployment and link parameters shared by the uplink and downlink studies.
///
/// The centre cell hosts the UE of interest; each of the `n_cells - 1`
/// neighbour cells contributes one aggregate interferer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScenario {
    pub n_cells: usize,
    pub ues_per_cell: usize,
    /// Base-station antennas (m).
    pub bs_ant: usize,
    /// UE antennas (n).
    pub ue_ant: usize,
    /// Resource elements (k).
    pub n_re: usize,
    /// Mean signal-to-interference ratio at the UE of interest.
    pub carrier_sir_db: f64,
    pub snr_db: f64,
    /// Frequency reuse; only 1 (full reuse) is supported.
    pub reuse_factor: u32,
    pub seed: u64,
    /// Taps of the tapped-delay-line channel.
    pub n_taps: usize,
    /// Exponential power-delay-profile decay.
    pub decay_db_per_tap: f64,
    /// When set, clean estimates come from a channel correlated with the
    /// current one by this coefficient instead of the same channel.
    pub staleness: Option<f64>,
    /// Path-loss exponent used to split interference power across cells.
    pub pathloss_exp: f64,
}

impl Default for CellScenario {
    fn default() -> Self {
        CellScenario {
            n_cells: 7,
            ues_per_cell: 16,
            bs_ant: 8,
            ue_ant: 2,
            n_re: 64,
            carrier_sir_db: 5.0,
            snr_db: 15.0,
            reuse_factor: 1,
            seed: 1,
            n_taps: 4,
            decay_db_per_tap: 3.0,
            staleness: None,
            pathloss_exp: 3.5,
        }
    }
}

impl CellScenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.bs_ant < 1 {
            return fail("bs_ant must be >= 1");
        }
        if self.ue_ant < 1 {
            return fail("ue_ant must be >= 1");
        }
        if self.n_re < 2 {
            return fail("n_re must be >= 2");
        }
        if self.n_cells < 1 {
            return fail("n_cells must be >= 1");
        }
        if self.ues_per_cell < 1 {
            return fail("ues_per_cell must be >= 1");
        }
        if self.reuse_factor != 1 {
            return fail("reuse_factor: only full reuse (1) is supported");
        }
        if self.n_taps < 1 || self.n_taps > self.n_re {
            return fail("n_taps must be in 1..=n_re");
        }
        if !self.carrier_sir_db.is_finite() || !self.snr_db.is_finite() || !self.decay_db_per_tap.is_finite() {
            return fail("sir/snr/decay must be finite");
        }
        if let Some(rho) = self.staleness {
            if !(0.0..=1.0).contains(&rho) {
                return fail("staleness correlation must be in [0, 1]");
            }
        }
        Ok(())
    }

    /// Noise variance per resource element relative to unit signal power.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Total interference power relative to unit signal power.
    pub fn interference_power(&self) -> f64 {
        if self.n_cells < 2 {
            0.0
        } else {
            10f64.powf(-self.carrier_sir_db / 10.0)
        }
    }

    /// Nominal SINR in dB.
    pub fn sinr_db(&self, interference_on: bool) -> f64 {
        let i = if interference_on { self.interference_power() } else { 0.0 };
        -10.0 * (i + self.noise_var()).log10()
    }

    /// Canonical `key=value` text; semantically equal scenarios render equal.
    pub fn canonical(&self) -> String {
        let mut fields = vec![
            format!("bs_ant={}", self.bs_ant),
            format!("carrier_sir_db={:e}", self.carrier_sir_db),
            format!("decay_db_per_tap={:e}", self.decay_db_per_tap),
            format!("n_cells={}", self.n_cells),
            format!("n_re={}", self.n_re),
            format!("n_taps={}", self.n_taps),
            format!("pathloss_exp={:e}", self.pathloss_exp),
            format!("reuse_factor={}", self.reuse_factor),
            format!("seed={}", self.seed),
            format!("snr_db={:e}", self.snr_db),
            format!(
                "staleness={}",
                self.staleness.map(|r| format!("{r:e}")).unwrap_or_else(|| "none".into())
            ),
            format!("ue_ant={}", self.ue_ant),
            format!("ues_per_cell={}", self.ues_per_cell),
        ];
        fields.sort();
        fields.join(";")
    }

    pub fn hash64(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_the_desk_scenario() {
        let s = CellScenario::default();
        s.validate().unwrap();
        assert_eq!((s.bs_ant, s.ue_ant, s.n_re, s.n_cells, s.ues_per_cell), (8, 2, 64, 7, 16));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let bad = [
            CellScenario { bs_ant: 0, ..Default::default() },
            CellScenario { ue_ant: 0, ..Default::default() },
            CellScenario { n_re: 1, ..Default::default() },
            CellScenario { n_cells: 0, ..Default::default() },
            CellScenario { reuse_factor: 3, ..Default::default() },
            CellScenario { staleness: Some(1.5), ..Default::default() },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(Error::Config(_))), "{s:?}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = CellScenario::default();
        let mut b = a.clone();
        assert_eq!(a.hash64(), b.hash64());
        b.snr_db = 16.0;
        assert_ne!(a.hash64(), b.hash64());
    }
}
