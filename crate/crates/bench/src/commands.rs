//! Subcommand implementations.
//!
//! Artifact layout under `output_dir`:
//!
//! ```text
//! data/ul_<m>x<n>.bin                  uplink datasets (gen-data)
//! ckpt/ul_<arch>_<m>x<n>_sf<sf>.ckpt   uplink checkpoints (train-ul, sweep-sf)
//! ckpt/dl_modular_nn.ckpt              downlink checkpoint (train-dl)
//! *.csv                                results, see `export`
//! plot.py                              renders the CSVs
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use intmit::dl::{evaluate_bler, sinr_at_bler, train_dl, training_samples, BlerPoint, DlBatch, DlLink, DlNetwork, Receiver};
use intmit::metrics::{mean_std, MetricsRecord};
use intmit::nn::{load_into, read_checkpoint, write_checkpoint, Model};
use intmit::phy::{make_dataset, nmse, read_dataset, write_dataset, EstimatePair};
use intmit::ul::{denoise, evaluate_with, frame_nmse, split, stack_rows, train_denoiser, MonolithicNet, RowDenoiser, UlNetwork};
use intmit::Real;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Precision};
use crate::error::{BenchError, BenchResult};
use crate::export::{write_metrics, write_plot_script, write_rows};
use crate::gradcheck::run_suite;
use crate::timing::{time_batches, TimingRow, FRAME_BUDGET_US, REFERENCE_US};

/// Uplink network architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Modular,
    Monolithic,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Modular => "modular",
            Arch::Monolithic => "monolithic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainUl(Arch),
    TrainDl,
    EvalUl,
    EvalDl,
    SweepSinr,
    SweepSf,
    GradCheck,
    Timing,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainUl(_) => "train-ul",
            Command::TrainDl => "train-dl",
            Command::EvalUl => "eval-ul",
            Command::EvalDl => "eval-dl",
            Command::SweepSinr => "sweep-sinr",
            Command::SweepSf => "sweep-sf",
            Command::GradCheck => "grad-check",
            Command::Timing => "timing",
        }
    }
}

/// Files written and human-readable summary lines of one run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn note(&mut self, line: String) {
        self.summary.push(line);
    }
}

/// Runs `cmd` and records its wall-clock time in `wall_clock.csv`.
pub fn run(cfg: &ExperimentConfig, cmd: Command) -> BenchResult<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let t0 = Instant::now();
    let mut out = match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg, cmd)?,
        Precision::F32 => run_typed::<f32>(cfg, cmd)?,
    };
    write_plot_script(&cfg.output_dir)?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    append_wall_clock(&cfg.output_dir, cmd, &cfg.hash(), ms)?;
    out.note(format!("{} finished in {:.1} s", cmd.name(), ms / 1e3));
    Ok(out)
}

fn run_typed<T: Real>(cfg: &ExperimentConfig, cmd: Command) -> BenchResult<Outcome> {
    match cmd {
        Command::GenData => gen_data::<T>(cfg),
        Command::TrainUl(arch) => train_ul::<T>(cfg, arch),
        Command::TrainDl => train_dl_cmd::<T>(cfg),
        Command::EvalUl => eval_ul::<T>(cfg),
        Command::EvalDl => bler_cmd::<T>(cfg, &[cfg.dl.eval_sinr_db], "bler_eval.csv"),
        Command::SweepSinr => {
            if cfg.sweep.sinr_grid_db.is_empty() {
                return Err(BenchError::Config("sweep.sinr_grid_db: must not be empty for sweep-sinr".into()));
            }
            bler_cmd::<T>(cfg, &cfg.sweep.sinr_grid_db, "bler_vs_sinr.csv")
        }
        Command::SweepSf => sweep_sf::<T>(cfg),
        Command::GradCheck => grad_check(cfg),
        Command::Timing => timing::<T>(cfg),
    }
}

fn append_wall_clock(dir: &Path, cmd: Command, hash: &str, ms: f64) -> BenchResult<()> {
    let path = dir.join("wall_clock.csv");
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    if fresh {
        writeln!(f, "command,config_hash,wall_clock_ms")?;
    }
    writeln!(f, "{},{hash},{ms:.3}", cmd.name())?;
    Ok(())
}

fn short_hash(value: &serde_json::Value) -> String {
    Sha256::digest(value.to_string().as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Identity of everything an uplink checkpoint depends on.
fn ul_key(cfg: &ExperimentConfig, arch: Arch, ant: (usize, usize), sf: f64) -> String {
    let mut train = cfg.train.clone();
    train.scale_factor = sf;
    short_hash(&serde_json::json!({
        "arch": arch.name(), "antennas": ant, "seed": cfg.seed, "precision": cfg.precision,
        "scenario": cfg.scenario, "data": cfg.data, "train": train,
    }))
}

fn dl_key(cfg: &ExperimentConfig) -> String {
    short_hash(&serde_json::json!({
        "seed": cfg.seed, "precision": cfg.precision, "scenario": cfg.scenario, "dl": cfg.dl,
    }))
}

fn dataset_path(cfg: &ExperimentConfig, (m, n): (usize, usize)) -> PathBuf {
    cfg.output_dir.join("data").join(format!("ul_{m}x{n}.bin"))
}

fn ul_ckpt_path(cfg: &ExperimentConfig, arch: Arch, (m, n): (usize, usize), sf: f64) -> PathBuf {
    cfg.output_dir.join("ckpt").join(format!("ul_{}_{m}x{n}_sf{sf}.ckpt", arch.name()))
}

fn dl_ckpt_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("ckpt").join("dl_modular_nn.ckpt")
}

fn missing(path: &Path, hint: &str) -> BenchError {
    BenchError::MissingArtifact { path: path.to_path_buf(), hint: hint.into() }
}

fn save_model<T: Real, M: Model<T>>(path: &Path, meta: &str, model: &M) -> BenchResult<()> {
    fs::create_dir_all(path.parent().expect("checkpoint paths have a parent"))?;
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, meta, model)?;
    w.flush()?;
    Ok(())
}

/// Loads parameters into `model` if the checkpoint exists and was written
/// for `key`; `Ok(false)` otherwise.
fn try_load<T: Real, M: Model<T>>(path: &Path, key: &str, model: &mut M) -> BenchResult<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let ckpt = read_checkpoint(&mut BufReader::new(File::open(path)?))?;
    if !ckpt.meta.split_whitespace().any(|t| t == format!("key={key}")) {
        return Ok(false);
    }
    load_into(model, &ckpt)?;
    Ok(true)
}

fn load_dataset<T: Real>(cfg: &ExperimentConfig, ant: (usize, usize)) -> BenchResult<Vec<EstimatePair<T>>> {
    let path = dataset_path(cfg, ant);
    if !path.exists() {
        return Err(missing(&path, "run gen-data first"));
    }
    let (header, pairs) = read_dataset::<T, _>(&mut BufReader::new(File::open(&path)?))?;
    if header.scenario_hash != cfg.scenario_for(ant).hash64() || pairs.len() != cfg.data.n_frames {
        return Err(missing(&path, "dataset was generated for a different config; rerun gen-data"));
    }
    Ok(pairs)
}

fn gen_data<T: Real>(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let hash = cfg.hash();
    let mut records = Vec::new();
    for &ant in &cfg.sweep.antenna_configs {
        let scenario = cfg.scenario_for(ant);
        let pairs = make_dataset::<T>(&scenario, cfg.data.n_frames, true, cfg.data_seed())?;
        let path = dataset_path(cfg, ant);
        fs::create_dir_all(path.parent().expect("dataset paths have a parent"))?;
        let mut w = BufWriter::new(File::create(&path)?);
        write_dataset(&mut w, scenario.hash64(), &pairs)?;
        w.flush()?;
        let id = format!("data-{}x{}", ant.0, ant.1);
        let clean: Vec<f64> = pairs.iter().map(|p| nmse(&p.h_clean_est, &p.h_true.h).map(|v| v.as_f64())).collect::<Result<_, _>>()?;
        let int: Vec<f64> = pairs.iter().map(|p| nmse(&p.h_int_est, &p.h_true.h).map(|v| v.as_f64())).collect::<Result<_, _>>()?;
        let n = pairs.len() as u64;
        for (name, v) in [("nmse_clean", &clean), ("nmse_int", &int)] {
            records.push(MetricsRecord::new(&id, name, scenario.carrier_sir_db, mean_std(v).0, n).with_origin(&hash, cfg.seed));
        }
        out.note(format!("{id}: {n} frames, mean NMSE clean {:.4}, interfered {:.4}", mean_std(&clean).0, mean_std(&int).0));
        out.artifacts.push(path);
    }
    let path = cfg.output_dir.join("dataset_summary.csv");
    write_metrics(&path, &records)?;
    out.artifacts.push(path);
    Ok(out)
}

fn curve_records(id: &str, hash: &str, seed: u64, raw: f64, n_heldout: usize, curve: &[intmit::ul::EpochStats]) -> Vec<MetricsRecord> {
    let mut v = vec![MetricsRecord::new(id, "heldout_nmse_raw", 0.0, raw, n_heldout as u64).with_origin(hash, seed)];
    for e in curve {
        v.push(MetricsRecord::new(id, "heldout_nmse", e.epoch as f64, e.heldout_nmse, n_heldout as u64).with_origin(hash, seed));
        v.push(MetricsRecord::new(id, "train_loss", e.epoch as f64, e.train_loss, 0).with_origin(hash, seed));
    }
    v
}

/// Trains one uplink network and stores its checkpoint; returns the
/// learning-curve records.
fn train_one<T: Real, M: RowDenoiser<T>>(
    cfg: &ExperimentConfig,
    net: M,
    arch: Arch,
    ant: (usize, usize),
    sf: f64,
    data: &[EstimatePair<T>],
) -> BenchResult<(Vec<MetricsRecord>, f64, f64)> {
    let out = train_denoiser(net, data, &cfg.train_config(sf), |_| {})?;
    let key = ul_key(cfg, arch, ant, sf);
    let meta = format!("ul-{} sf={sf} m={} n={} k={} key={key}", arch.name(), ant.0, ant.1, cfg.scenario.n_re);
    save_model(&ul_ckpt_path(cfg, arch, ant, sf), &meta, &out.net)?;
    let id = format!("ul-{}-{}x{}-sf{sf}", arch.name(), ant.0, ant.1);
    let recs = curve_records(&id, &cfg.hash(), cfg.seed, out.raw_heldout_nmse, out.n_heldout, &out.learning_curve);
    Ok((recs, out.raw_heldout_nmse, out.final_nmse()))
}

fn train_ul<T: Real>(cfg: &ExperimentConfig, arch: Arch) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let sf = cfg.train.scale_factor;
    let mut records = Vec::new();
    for &ant in &cfg.sweep.antenna_configs {
        let data = load_dataset::<T>(cfg, ant)?;
        let (recs, raw, fin) = match arch {
            Arch::Modular => train_one(cfg, UlNetwork::<T>::new(sf, cfg.seed), arch, ant, sf, &data)?,
            Arch::Monolithic => train_one(cfg, MonolithicNet::<T>::new(sf, cfg.seed), arch, ant, sf, &data)?,
        };
        records.extend(recs);
        out.note(format!(
            "{} {}x{}: held-out NMSE {raw:.4} -> {fin:.4} ({:.1}% reduction)",
            arch.name(),
            ant.0,
            ant.1,
            100.0 * (1.0 - fin / raw)
        ));
        out.artifacts.push(ul_ckpt_path(cfg, arch, ant, sf));
    }
    let path = cfg.output_dir.join(format!("learning_curve_{}.csv", arch.name()));
    write_metrics(&path, &records)?;
    out.artifacts.push(path);
    Ok(out)
}

/// One row of `ul_eval.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct UlEvalRow {
    pub config: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub sir_db: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub nmse_raw: f64,
    pub nmse_rec: f64,
}

fn eval_ul<T: Real>(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let sf = cfg.train.scale_factor;
    let hash = cfg.hash();
    let (mut rows, mut records) = (Vec::new(), Vec::new());
    for &ant in &cfg.sweep.antenna_configs {
        let data = load_dataset::<T>(cfg, ant)?;
        let (_, held) = split(&data);
        let s = cfg.scenario_for(ant);
        for arch in [Arch::Modular, Arch::Monolithic] {
            let path = ul_ckpt_path(cfg, arch, ant, sf);
            let key = ul_key(cfg, arch, ant, sf);
            let evals = match arch {
                Arch::Modular => {
                    let mut net = UlNetwork::<T>::new(sf, cfg.seed);
                    if !try_load(&path, &key, &mut net)? {
                        return Err(missing(&path, "run train-ul with this config first"));
                    }
                    evaluate_with(held, |h| denoise(&net, h))?
                }
                Arch::Monolithic => {
                    let mut net = MonolithicNet::<T>::new(sf, cfg.seed);
                    // The baseline is optional.
                    if !try_load(&path, &key, &mut net)? {
                        continue;
                    }
                    evaluate_with(held, |h| denoise(&net, h))?
                }
            };
            let id = format!("ul-{}-{}x{}-sf{sf}", arch.name(), ant.0, ant.1);
            let raw: Vec<f64> = evals.iter().map(|e| e.nmse_raw).collect();
            let rec: Vec<f64> = evals.iter().map(|e| e.nmse_rec).collect();
            let (mr, mc) = (mean_std(&raw).0, mean_std(&rec).0);
            let n = evals.len() as u64;
            for (name, y) in [("nmse_raw", mr), ("nmse_rec", mc), ("nmse_reduction", 1.0 - mc / mr)] {
                records.push(MetricsRecord::new(&id, name, s.carrier_sir_db, y, n).with_origin(&hash, cfg.seed));
            }
            out.note(format!("{id}: NMSE raw {mr:.4}, recovered {mc:.4}, reduction {:.1}%", 100.0 * (1.0 - mc / mr)));
            rows.extend(evals.iter().map(|e| UlEvalRow {
                config: arch.name().into(),
                m: ant.0,
                n: ant.1,
                k: s.n_re,
                sir_db: s.carrier_sir_db,
                snr_db: s.snr_db,
                seed: e.seed,
                nmse_raw: e.nmse_raw,
                nmse_rec: e.nmse_rec,
            }));
        }
    }
    for (name, write) in [("ul_eval.csv", true), ("ul_metrics.csv", false)] {
        let path = cfg.output_dir.join(name);
        if write {
            write_rows(&path, &rows)?;
        } else {
            write_metrics(&path, &records)?;
        }
        out.artifacts.push(path);
    }
    Ok(out)
}

fn dl_link<T: Real>(cfg: &ExperimentConfig) -> BenchResult<DlLink<T>> {
    Ok(DlLink::new(&cfg.dl_scenario(), cfg.tx_chain()?)?)
}

fn train_dl_cmd<T: Real>(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let link = dl_link::<T>(cfg)?;
    let samples = training_samples(&link, &cfg.dl.train_sinr_grid_db, cfg.dl.train_frames, cfg.dl_train_seed())?;
    let trained = train_dl(&link, &samples, &cfg.dl_train_config(), |_| {})?;
    let meta = format!(
        "dl-modular_nn order={} sf={} key={}",
        cfg.dl.qam_order,
        cfg.dl.scale_factor,
        dl_key(cfg)
    );
    let ckpt = dl_ckpt_path(cfg);
    save_model(&ckpt, &meta, &trained.net)?;
    let (hash, id) = (cfg.hash(), "dl-modular_nn");
    let mut records = Vec::new();
    for e in &trained.curve {
        let x = e.epoch as f64;
        let n = samples.len() as u64;
        records.push(MetricsRecord::new(id, "train_loss", x, e.train_loss, n).with_origin(&hash, cfg.seed));
        records.push(MetricsRecord::new(id, "symbol_accuracy", x, e.symbol_accuracy, n).with_origin(&hash, cfg.seed));
        records.push(MetricsRecord::new(id, "euclidean_distance", x, e.euclidean, n).with_origin(&hash, cfg.seed));
    }
    if let Some(last) = trained.curve.last() {
        out.note(format!(
            "modular_nn: {} frames, final loss {:.4}, symbol accuracy {:.4}",
            samples.len(),
            last.train_loss,
            last.symbol_accuracy
        ));
    }
    let path = cfg.output_dir.join("learning_curve_dl.csv");
    write_metrics(&path, &records)?;
    out.artifacts.extend([ckpt, path]);
    Ok(out)
}

/// One row of the BLER CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct BlerRow {
    pub receiver: String,
    pub sinr_db: f64,
    pub n_frames: usize,
    pub n_block_errors: usize,
    pub bler: f64,
    pub seed: u64,
    pub config_hash: String,
}

fn load_dl_net<T: Real>(cfg: &ExperimentConfig) -> BenchResult<DlNetwork<T>> {
    let path = dl_ckpt_path(cfg);
    let order = cfg.tx_chain()?.order;
    let mut net = DlNetwork::<T>::new(order, cfg.dl.scale_factor, cfg.seed);
    if !try_load(&path, &dl_key(cfg), &mut net)? {
        return Err(missing(&path, "run train-dl with this config first"));
    }
    Ok(net)
}

fn bler_cmd<T: Real>(cfg: &ExperimentConfig, grid: &[f64], file: &str) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let net = load_dl_net::<T>(cfg)?;
    let link = dl_link::<T>(cfg)?;
    let seed = cfg.dl_eval_seed();
    let points = evaluate_bler(Some(&net), &link, grid, cfg.dl.eval_frames, seed)?;
    let hash = cfg.hash();
    let mut rows: Vec<BlerRow> = points
        .iter()
        .map(|p| BlerRow {
            receiver: p.receiver.name().into(),
            sinr_db: p.sinr_db,
            n_frames: p.n_frames,
            n_block_errors: p.n_block_errors,
            bler: p.bler,
            seed,
            config_hash: hash.clone(),
        })
        .collect();
    rows.sort_by(|a, b| a.receiver.cmp(&b.receiver).then(a.sinr_db.total_cmp(&b.sinr_db)));
    let path = cfg.output_dir.join(file);
    write_rows(&path, &rows)?;
    out.artifacts.push(path);
    for r in Receiver::ALL {
        let curve: Vec<(f64, f64)> = points.iter().filter(|p| p.receiver == r).map(|p| (p.sinr_db, p.bler)).collect();
        match sinr_at_bler(&curve, 0.01) {
            Some(x) => out.note(format!("{}: 1% BLER at {x:.2} dB", r.name())),
            None if grid.len() == 1 => out.note(format!("{}: BLER {:.4} at {:.1} dB", r.name(), curve[0].1, curve[0].0)),
            None => out.note(format!("{}: 1% BLER not crossed on this grid", r.name())),
        }
    }
    Ok(out)
}

/// BLER points of one receiver, sorted by SINR.
pub fn receiver_curve(points: &[BlerPoint], r: Receiver) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = points.iter().filter(|p| p.receiver == r).map(|p| (p.sinr_db, p.bler)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Smallest scale factor whose metric is within `tol` (relative) of the best.
pub fn plateau_sf(points: &[(f64, f64)], tol: f64) -> Option<f64> {
    let best = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.into_iter().find(|p| p.1 <= best * (1.0 + tol)).map(|p| p.0)
}

fn sweep_sf<T: Real>(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    if cfg.sweep.sf_grid.is_empty() {
        return Err(BenchError::Config("sweep.sf_grid: must not be empty for sweep-sf".into()));
    }
    if let Some(sf) = cfg.sweep.sf_grid.iter().find(|&&sf| !(sf > 0.0)) {
        return Err(BenchError::Config(format!("sweep.sf_grid: scale factor {sf} must be positive")));
    }
    let mut out = Outcome::default();
    let ant = cfg.sweep.antenna_configs[0];
    let data = load_dataset::<T>(cfg, ant)?;
    let (_, held) = split(&data);
    let hash = cfg.hash();
    let id = format!("sf-modular-{}x{}", ant.0, ant.1);
    let arch = Arch::Modular;
    let results: Vec<(f64, f64, bool)> = cfg
        .sweep
        .sf_grid
        .par_iter()
        .map(|&sf| {
            let mut net = UlNetwork::<T>::new(sf, cfg.seed);
            let reused = try_load(&ul_ckpt_path(cfg, arch, ant, sf), &ul_key(cfg, arch, ant, sf), &mut net)?;
            if !reused {
                train_one(cfg, UlNetwork::<T>::new(sf, cfg.seed), arch, ant, sf, &data)?;
                try_load(&ul_ckpt_path(cfg, arch, ant, sf), &ul_key(cfg, arch, ant, sf), &mut net)?;
            }
            Ok((sf, mean_std(&frame_nmse(&net, held)?).0, reused))
        })
        .collect::<BenchResult<_>>()?;
    let mut records = Vec::new();
    for &(sf, v, reused) in &results {
        records.push(MetricsRecord::new(&id, "heldout_nmse", sf, v, held.len() as u64).with_origin(&hash, cfg.seed));
        out.note(format!("SF {sf}: held-out NMSE {v:.4}{}", if reused { " (checkpoint reused)" } else { "" }));
    }
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.0, r.1)).collect();
    if let Some(p) = plateau_sf(&pts, 0.05) {
        records.push(MetricsRecord::new(&id, "plateau_sf", 0.0, p, pts.len() as u64).with_origin(&hash, cfg.seed));
        out.note(format!("plateau (within 5% of best) from SF {p}"));
    }
    let path = cfg.output_dir.join("sf_sweep.csv");
    write_metrics(&path, &records)?;
    out.artifacts.push(path);
    Ok(out)
}

fn grad_check(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let rows = run_suite()?;
    let path = cfg.output_dir.join("grad_check.csv");
    write_rows(&path, &rows)?;
    out.artifacts.push(path);
    for r in &rows {
        out.note(format!(
            "{:<34} {:>6} params  max rel err {:.2e}  {}",
            r.check,
            r.params_checked,
            r.max_rel_err,
            match (r.pass, r.expect_pass) {
                (true, true) => "pass",
                (false, false) => "fails as intended",
                (false, true) => "FAIL",
                (true, false) => "CONTROL NOT DETECTED",
            }
        ));
    }
    let bad: Vec<&str> = rows.iter().filter(|r| !r.as_expected()).map(|r| r.check.as_str()).collect();
    if !bad.is_empty() {
        return Err(BenchError::GradCheckFailed(bad.join(", ")));
    }
    Ok(out)
}

fn timing<T: Real>(cfg: &ExperimentConfig) -> BenchResult<Outcome> {
    let mut out = Outcome::default();
    let sf = cfg.train.scale_factor;
    let ant = cfg.sweep.antenna_configs[0];
    let data = load_dataset::<T>(cfg, ant)?;
    let frames: Vec<&_> = data.iter().map(|p| &p.h_int_est).cycle().take(cfg.timing.frames.max(1)).collect();
    let mut rows: Vec<TimingRow> = Vec::new();

    let mut ul = UlNetwork::<T>::new(sf, cfg.seed);
    let path = ul_ckpt_path(cfg, Arch::Modular, ant, sf);
    if !try_load(&path, &ul_key(cfg, Arch::Modular, ant, sf), &mut ul)? {
        return Err(missing(&path, "run train-ul with this config first"));
    }
    rows.extend(time_batches("ul_modular", &cfg.timing.batch_sizes, frames.len(), |range| {
        let x = stack_rows(&frames[range])?;
        ul.infer(&x).map(|_| ())
    })?);

    let mut mono = MonolithicNet::<T>::new(sf, cfg.seed);
    if try_load(&ul_ckpt_path(cfg, Arch::Monolithic, ant, sf), &ul_key(cfg, Arch::Monolithic, ant, sf), &mut mono)? {
        rows.extend(time_batches("ul_monolithic", &cfg.timing.batch_sizes, frames.len(), |range| {
            let x = stack_rows(&frames[range])?;
            mono.infer(&x).map(|_| ())
        })?);
    }

    if let Ok(net) = load_dl_net::<T>(cfg) {
        let link = dl_link::<T>(cfg)?;
        let pool: Vec<_> = (0..100u64).map(|i| link.sample(i, cfg.dl_eval_seed())).collect::<Result<_, _>>()?;
        let prepared: Vec<_> = pool
            .iter()
            .map(|s| {
                let r = link.reference(s)?;
                let z = link.matched_filter(s, &r);
                Ok((s.pair.h_int_est.clone(), r, z))
            })
            .collect::<BenchResult<_>>()?;
        rows.extend(time_batches("dl_modular_nn", &cfg.timing.batch_sizes, frames.len(), |range| {
            let refs: Vec<_> = range.map(|i| &prepared[i % prepared.len()]).map(|(a, b, c)| (a, b, &c[..])).collect();
            net.infer_batch(&DlBatch::from_frames(&refs)?).map(|_| ())
        })?);
    }

    let path = cfg.output_dir.join("timing.csv");
    write_rows(&path, &rows)?;
    out.artifacts.push(path);
    for r in &rows {
        out.note(format!(
            "{:<14} batch {:>4}: mean {:>9.1} us/frame  p50 {:>9.1}  p95 {:>9.1}  ({:.2}x the {REFERENCE_US} us reference, {:.1}% of a {FRAME_BUDGET_US} us frame)",
            r.model,
            r.batch_size,
            r.mean_us,
            r.p50_us,
            r.p95_us,
            r.mean_us / REFERENCE_US,
            100.0 * r.mean_us / FRAME_BUDGET_US
        ));
    }
    let report = cfg.output_dir.join("timing_report.txt");
    fs::write(&report, out.summary.join("\n") + "\n")?;
    out.artifacts.push(report);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_is_first_point_near_the_best() {
        let pts = [(2.0, 0.050), (0.25, 0.080), (1.0, 0.051), (0.5, 0.060)];
        assert_eq!(plateau_sf(&pts, 0.05), Some(1.0));
        assert_eq!(plateau_sf(&pts, 1.0), Some(0.25));
        assert_eq!(plateau_sf(&[], 0.05), None);
    }
}
