//! Experiment configuration.
//!
//! A config is a single TOML file. Every section is optional and falls back
//! to the desk profile; unknown keys are rejected so typos surface as
//! configuration errors instead of silently using defaults.
//!
//! ```toml
//! format_version = 1
//! name = "desk"
//! seed = 1
//! precision = "f64"
//! output_dir = "out/desk"
//!
//! [scenario]      # deployment and link budget
//! [data]          # uplink dataset size
//! [train]         # uplink training
//! [dl]            # downlink link, training and evaluation
//! [sweep]         # SINR grid, scale-factor grid, antenna configurations
//! [timing]        # inference timing
//! ```
//!
//! All seeds are derived from the single master `seed`.

use std::path::{Path, PathBuf};

use intmit::phy::CellScenario;
use intmit::seed::{derive_seed, Stream};
use intmit::txrx::{Interleaver, LdpcCode, QamOrder, TxChain};
use intmit::ul::{LabelSource, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, BenchResult};

pub const FORMAT_VERSION: u32 = 1;

/// Environment variable overriding `output_dir`.
pub const ENV_OUTPUT_DIR: &str = "INTMIT_OUTPUT_DIR";
/// Environment variable fixing the worker thread count.
pub const ENV_THREADS: &str = "INTMIT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub n_cells: usize,
    pub ues_per_cell: usize,
    pub bs_ant: usize,
    pub ue_ant: usize,
    pub n_re: usize,
    pub carrier_sir_db: f64,
    pub snr_db: f64,
    pub reuse_factor: u32,
    pub n_taps: usize,
    pub decay_db_per_tap: f64,
    pub staleness: Option<f64>,
    pub pathloss_exp: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = CellScenario::default();
        ScenarioSection {
            n_cells: s.n_cells,
            ues_per_cell: s.ues_per_cell,
            bs_ant: s.bs_ant,
            ue_ant: s.ue_ant,
            n_re: s.n_re,
            carrier_sir_db: s.carrier_sir_db,
            snr_db: s.snr_db,
            reuse_factor: s.reuse_factor,
            n_taps: s.n_taps,
            decay_db_per_tap: s.decay_db_per_tap,
            staleness: s.staleness,
            pathloss_exp: s.pathloss_exp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Uplink frames per antenna configuration; 80% train, 20% held out.
    pub n_frames: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { n_frames: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    #[default]
    CleanEstimate,
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_frames: usize,
    pub lr: f64,
    pub scale_factor: f64,
    pub labels: Labels,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { epochs: 6, batch_frames: 32, lr: 1e-3, scale_factor: 1.0, labels: Labels::CleanEstimate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlSection {
    pub snr_db: f64,
    pub staleness: Option<f64>,
    /// LDPC block length; a block must fill the `n_re` resource elements.
    pub code_length: usize,
    pub qam_order: usize,
    pub train_frames: usize,
    pub train_sinr_grid_db: Vec<f64>,
    pub epochs: usize,
    pub batch_frames: usize,
    pub lr: f64,
    pub scale_factor: f64,
    pub eval_frames: usize,
    /// Operating point of `eval-dl`.
    pub eval_sinr_db: f64,
}

impl Default for DlSection {
    fn default() -> Self {
        DlSection {
            snr_db: 20.0,
            staleness: Some(0.99),
            code_length: 128,
            qam_order: 4,
            train_frames: 4000,
            train_sinr_grid_db: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            epochs: 10,
            batch_frames: 32,
            lr: 2e-3,
            scale_factor: 1.0,
            eval_frames: 2000,
            eval_sinr_db: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sinr_grid_db: Vec<f64>,
    pub sf_grid: Vec<f64>,
    /// `(bs_ant, ue_ant)` pairs for the uplink studies.
    pub antenna_configs: Vec<(usize, usize)>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sinr_grid_db: (4..=12).map(f64::from).collect(),
            sf_grid: vec![0.25, 0.5, 1.0, 2.0],
            antenna_configs: vec![(8, 2)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub frames: usize,
    pub batch_sizes: Vec<usize>,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection { frames: 1000, batch_sizes: vec![1, 10, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub dl: DlSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub timing: TimingSection,
}

fn default_format_version() -> u32 {
    FORMAT_VERSION
}

fn default_name() -> String {
    "desk".into()
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    /// Desk profile writing to `output_dir`.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            format_version: FORMAT_VERSION,
            name: default_name(),
            seed: default_seed(),
            precision: Precision::F64,
            output_dir: output_dir.into(),
            scenario: ScenarioSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            dl: DlSection::default(),
            sweep: SweepSection::default(),
            timing: TimingSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> BenchResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> BenchResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks everything that does not depend on the subcommand.
    pub fn validate(&self) -> BenchResult<()> {
        let fail = |field: &str, msg: &str| Err(BenchError::Config(format!("{field}: {msg}")));
        if self.format_version != FORMAT_VERSION {
            return fail("format_version", &format!("expected {FORMAT_VERSION}, found {}", self.format_version));
        }
        if self.name.is_empty() || self.name.contains(|c: char| c == ',' || c.is_whitespace()) {
            return fail("name", "must be non-empty without commas or whitespace");
        }
        self.scenario().validate().map_err(|e| BenchError::Config(format!("scenario: {e}")))?;
        self.dl_scenario().validate().map_err(|e| BenchError::Config(format!("dl: {e}")))?;
        if self.data.n_frames < 5 {
            return fail("data.n_frames", "need at least 5 frames for an 80/20 split");
        }
        self.train_config(self.train.scale_factor)
            .validate()
            .map_err(|e| BenchError::Config(format!("train: {e}")))?;
        self.dl_train_config()
            .validate()
            .map_err(|e| BenchError::Config(format!("dl: {e}")))?;
        if QamOrder::from_order(self.dl.qam_order).is_err() {
            return fail("dl.qam_order", "must be 4, 16 or 64");
        }
        let bits = QamOrder::from_order(self.dl.qam_order).map(|q| q.bits_per_symbol()).unwrap_or(1);
        if self.dl.code_length != self.scenario.n_re * bits {
            return fail(
                "dl.code_length",
                &format!("must equal n_re x bits per symbol = {}", self.scenario.n_re * bits),
            );
        }
        if self.dl.train_frames == 0 || self.dl.eval_frames == 0 {
            return fail("dl", "train_frames and eval_frames must be >= 1");
        }
        if self.dl.train_sinr_grid_db.is_empty() {
            return fail("dl.train_sinr_grid_db", "must not be empty");
        }
        if self.sweep.antenna_configs.iter().any(|&(m, n)| m == 0 || n == 0) {
            return fail("sweep.antenna_configs", "antenna counts must be >= 1");
        }
        if self.timing.batch_sizes.contains(&0) {
            return fail("timing.batch_sizes", "batch sizes must be >= 1");
        }
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !all_finite(&self.sweep.sinr_grid_db) || !all_finite(&self.sweep.sf_grid) || !all_finite(&self.dl.train_sinr_grid_db) {
            return fail("sweep", "grid values must be finite");
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON form. Keys are sorted, so
    /// equal configs hash equal whatever order the TOML listed them in.
    /// `output_dir` is excluded: moving results does not change them.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Uplink scenario (first antenna configuration applies only through
    /// [`Self::scenario_for`]).
    pub fn scenario(&self) -> CellScenario {
        let s = &self.scenario;
        CellScenario {
            n_cells: s.n_cells,
            ues_per_cell: s.ues_per_cell,
            bs_ant: s.bs_ant,
            ue_ant: s.ue_ant,
            n_re: s.n_re,
            carrier_sir_db: s.carrier_sir_db,
            snr_db: s.snr_db,
            reuse_factor: s.reuse_factor,
            seed: self.seed,
            n_taps: s.n_taps,
            decay_db_per_tap: s.decay_db_per_tap,
            staleness: s.staleness,
            pathloss_exp: s.pathloss_exp,
        }
    }

    pub fn scenario_for(&self, (m, n): (usize, usize)) -> CellScenario {
        CellScenario { bs_ant: m, ue_ant: n, ..self.scenario() }
    }

    pub fn dl_scenario(&self) -> CellScenario {
        CellScenario { snr_db: self.dl.snr_db, staleness: self.dl.staleness, ..self.scenario() }
    }

    /// Seed of the uplink dataset frames.
    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Data, 0)
    }

    pub fn dl_train_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Data, 1)
    }

    pub fn dl_eval_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Data, 2)
    }

    pub fn train_config(&self, scale_factor: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_frames: self.train.batch_frames,
            lr: self.train.lr,
            seed: self.seed,
            scale_factor,
            labels: match self.train.labels {
                Labels::CleanEstimate => LabelSource::CleanEstimate,
                Labels::Truth => LabelSource::Truth,
            },
        }
    }

    pub fn dl_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.dl.epochs,
            batch_frames: self.dl.batch_frames,
            lr: self.dl.lr,
            seed: self.seed,
            scale_factor: self.dl.scale_factor,
            labels: LabelSource::CleanEstimate,
        }
    }

    /// Coding chain of the downlink; code and interleaver are seeded from the
    /// master seed.
    pub fn tx_chain(&self) -> BenchResult<TxChain> {
        let order = QamOrder::from_order(self.dl.qam_order)?;
        let code = LdpcCode::regular_3_6(self.dl.code_length, derive_seed(self.seed, Stream::Code, 0))?;
        let pi = Interleaver::random(self.dl.code_length, derive_seed(self.seed, Stream::Interleaver, 0));
        Ok(TxChain::new(code, pi, order)?)
    }

    /// Applies `--out`, then the environment override, to `output_dir`.
    pub fn with_output_override(mut self, cli_out: Option<PathBuf>) -> Self {
        if let Some(dir) = cli_out {
            self.output_dir = dir;
        } else if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output_dir = dir.into();
            }
        }
        self
    }
}
