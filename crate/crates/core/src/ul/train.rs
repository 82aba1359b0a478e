//! Training and evaluation of the uplink denoisers.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{mean_std, MetricsRecord};
use crate::nn::{mse_loss, AdamState, Tensor};
use crate::phy::{nmse, CArray3, EstimatePair};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

use super::network::{MonolithicNet, RowDenoiser, UlNetwork};
use super::preprocess::{postprocess, preprocess, stack_rows};

/// Which estimate the network is taught to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// The interference-free estimate a base station can actually collect.
    CleanEstimate,
    /// Ground truth, for measuring what the clean-label setup gives up.
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_frames: usize,
    pub lr: f64,
    pub seed: u64,
    pub scale_factor: f64,
    pub labels: LabelSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 60, batch_frames: 32, lr: 1e-3, seed: 1, scale_factor: 1.0, labels: LabelSource::CleanEstimate }
    }
}

impl TrainConfig {
    pub const SF_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_frames < 1 {
            return Err(Error::Config("batch_frames must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !Self::SF_GRID.contains(&self.scale_factor) {
            return Err(Error::Config(format!("scale_factor {} not in {:?}", self.scale_factor, Self::SF_GRID)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training-batch loss over the epoch.
    pub train_loss: f64,
    /// Mean held-out NMSE against ground truth after the epoch.
    pub heldout_nmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub net: M,
    pub learning_curve: Vec<EpochStats>,
    /// Held-out NMSE of the raw interfered estimate.
    pub raw_heldout_nmse: f64,
    pub n_train: usize,
    pub n_heldout: usize,
}

impl<M> TrainOutcome<M> {
    pub fn final_nmse(&self) -> f64 {
        self.learning_curve.last().map_or(f64::NAN, |e| e.heldout_nmse)
    }

    /// Relative NMSE reduction of the final network vs the raw estimate.
    pub fn reduction(&self) -> f64 {
        1.0 - self.final_nmse() / self.raw_heldout_nmse
    }
}

/// 80/20 split by frame order.
pub fn split<T: Real>(dataset: &[EstimatePair<T>]) -> (&[EstimatePair<T>], &[EstimatePair<T>]) {
    let n_train = ((dataset.len() * 4) / 5).clamp(1, dataset.len());
    let (a, b) = dataset.split_at(n_train);
    if b.is_empty() {
        (a, a)
    } else {
        (a, b)
    }
}

/// Denoised estimate of one frame.
pub fn denoise<T: Real, M: RowDenoiser<T>>(net: &M, h_i: &CArray3<T>) -> Result<CArray3<T>> {
    let (m, n, _) = h_i.dim();
    postprocess(&net.infer(&preprocess(h_i))?, m, n)
}

/// Uplink forward pass of the modular network.
pub fn ul_forward<T: Real>(net: &UlNetwork<T>, h_i: &CArray3<T>) -> Result<CArray3<T>> {
    denoise(net, h_i)
}

/// Per-frame NMSE against ground truth, computed in parallel; order matches
/// the input.
pub fn frame_nmse<T: Real, M: RowDenoiser<T>>(net: &M, frames: &[EstimatePair<T>]) -> Result<Vec<f64>> {
    frames
        .par_iter()
        .map(|p| Ok(nmse(&denoise(net, &p.h_int_est)?, &p.h_true.h)?.as_f64()))
        .collect()
}

fn raw_nmse<T: Real>(frames: &[EstimatePair<T>]) -> Result<f64> {
    let v: Vec<f64> = frames
        .iter()
        .map(|p| nmse(&p.h_int_est, &p.h_true.h).map(|x| x.as_f64()))
        .collect::<Result<_>>()?;
    Ok(mean_std(&v).0)
}

/// Trains `net` on the first 80% of `dataset` and tracks held-out NMSE on
/// the rest after every epoch.
///
/// Rows (antenna pairs) are shuffled individually and fed in minibatches of
/// `batch_frames · m · n` rows.
pub fn train_denoiser<T: Real, M: RowDenoiser<T>>(
    mut net: M,
    dataset: &[EstimatePair<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset is empty".into()));
    }
    let (train, heldout) = split(dataset);
    let inputs = stack_rows(&train.iter().map(|p| &p.h_int_est).collect::<Vec<_>>())?;
    let labels = stack_rows(
        &train
            .iter()
            .map(|p| match cfg.labels {
                LabelSource::CleanEstimate => &p.h_clean_est,
                LabelSource::Truth => &p.h_true.h,
            })
            .collect::<Vec<_>>(),
    )?;
    let rows = inputs.shape()[0];
    let (m, n, k) = dataset[0].h_int_est.dim();
    let batch_rows = (cfg.batch_frames * m * n).min(rows);
    let row_len = k * 2;

    let mut adam = AdamState::new(cfg.lr);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut xb = Vec::with_capacity(batch_rows * row_len);
    let mut yb = Vec::with_capacity(batch_rows * row_len);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_rows) {
            xb.clear();
            yb.clear();
            for &r in chunk {
                xb.extend_from_slice(&inputs.data()[r * row_len..(r + 1) * row_len]);
                yb.extend_from_slice(&labels.data()[r * row_len..(r + 1) * row_len]);
            }
            let x = Tensor::from_vec(&[chunk.len(), k, 2], std::mem::take(&mut xb))?;
            let y = Tensor::from_vec(&[chunk.len(), k, 2], std::mem::take(&mut yb))?;
            net.zero_grad();
            let pred = net.forward(&x)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            net.backward(&grad)?;
            adam.step(&mut net.params_mut())?;
            loss_sum += loss.as_f64();
            batches += 1;
            xb = x.into_data();
            yb = y.into_data();
        }
        if !loss_sum.is_finite() {
            return Err(Error::State(format!("training diverged at epoch {epoch}")));
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            heldout_nmse: mean_std(&frame_nmse(&net, heldout)?).0,
        };
        on_epoch(&stats);
        curve.push(stats);
    }
    Ok(TrainOutcome {
        net,
        learning_curve: curve,
        raw_heldout_nmse: raw_nmse(heldout)?,
        n_train: train.len(),
        n_heldout: heldout.len(),
    })
}

pub fn train_ul<T: Real>(dataset: &[EstimatePair<T>], cfg: &TrainConfig) -> Result<TrainOutcome<UlNetwork<T>>> {
    train_denoiser(UlNetwork::new(cfg.scale_factor, cfg.seed), dataset, cfg, |_| {})
}

pub fn train_monolithic_baseline<T: Real>(
    dataset: &[EstimatePair<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<MonolithicNet<T>>> {
    train_denoiser(MonolithicNet::new(cfg.scale_factor, cfg.seed), dataset, cfg, |_| {})
}

/// Per-frame NMSE of raw and denoised estimates against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlFrameEval {
    pub seed: u64,
    pub nmse_raw: f64,
    pub nmse_rec: f64,
}

/// Evaluates `recover` (typically [`denoise`] with a trained network) on
/// every frame.
pub fn evaluate_with<T: Real>(
    dataset: &[EstimatePair<T>],
    recover: impl Fn(&CArray3<T>) -> Result<CArray3<T>> + Sync,
) -> Result<Vec<UlFrameEval>> {
    dataset
        .par_iter()
        .map(|p| {
            Ok(UlFrameEval {
                seed: p.seed,
                nmse_raw: nmse(&p.h_int_est, &p.h_true.h)?.as_f64(),
                nmse_rec: nmse(&recover(&p.h_int_est)?, &p.h_true.h)?.as_f64(),
            })
        })
        .collect()
}

/// One `nmse_rec` record per frame (x = frame index), then aggregate
/// mean/std records for both raw and recovered estimates.
pub fn evaluate_ul<T: Real, M: RowDenoiser<T>>(net: &M, dataset: &[EstimatePair<T>], experiment_id: &str) -> Result<Vec<MetricsRecord>> {
    let evals = evaluate_with(dataset, |h| denoise(net, h))?;
    Ok(eval_records(&evals, experiment_id))
}

pub fn eval_records(evals: &[UlFrameEval], experiment_id: &str) -> Vec<MetricsRecord> {
    let mut out: Vec<MetricsRecord> = evals
        .iter()
        .enumerate()
        .map(|(i, e)| MetricsRecord { seed: e.seed, ..MetricsRecord::new(experiment_id, "nmse_rec", i as f64, e.nmse_rec, 1) })
        .collect();
    let n = evals.len() as u64;
    for (name, v) in [
        ("nmse_raw", evals.iter().map(|e| e.nmse_raw).collect::<Vec<_>>()),
        ("nmse_rec", evals.iter().map(|e| e.nmse_rec).collect()),
    ] {
        let (mean, std) = mean_std(&v);
        out.push(MetricsRecord::new(experiment_id, &format!("{name}_mean"), f64::NAN, mean, n));
        out.push(MetricsRecord::new(experiment_id, &format!("{name}_std"), f64::NAN, std, n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{make_dataset, CellScenario};

    fn small() -> CellScenario {
        CellScenario { bs_ant: 2, ue_ant: 1, n_re: 16, ..Default::default() }
    }

    #[test]
    fn oracle_and_identity_recoveries() {
        let data = make_dataset::<f64>(&small(), 6, true, 1).unwrap();
        let id = evaluate_with(&data, |h| Ok(h.clone())).unwrap();
        assert!(id.iter().all(|e| e.nmse_rec == e.nmse_raw));
        let lookup: std::collections::HashMap<u64, _> = data.iter().map(|p| (p.seed, p.h_true.h.clone())).collect();
        let by_input: Vec<_> = data.iter().map(|p| (p.h_int_est.clone(), p.seed)).collect();
        let oracle = evaluate_with(&data, |h| {
            let seed = by_input.iter().find(|(x, _)| x == h).unwrap().1;
            Ok(lookup[&seed].clone())
        })
        .unwrap();
        assert!(oracle.iter().all(|e| e.nmse_rec == 0.0));
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let data = make_dataset::<f64>(&small(), 40, true, 2).unwrap();
        let cfg = TrainConfig { epochs: 4, batch_frames: 4, lr: 3e-3, scale_factor: 0.25, ..Default::default() };
        let a = train_ul(&data, &cfg).unwrap();
        let b = train_ul(&data, &cfg).unwrap();
        assert_eq!(a.learning_curve, b.learning_curve);
        let c = &a.learning_curve;
        assert!(c.last().unwrap().train_loss < c[0].train_loss);
        assert_eq!((a.n_train, a.n_heldout), (32, 8));
    }

    #[test]
    fn identical_frames_are_memorised() {
        let one = make_dataset::<f64>(&small(), 1, true, 3).unwrap();
        let data = vec![one[0].clone(); 10];
        let cfg = TrainConfig { epochs: 60, batch_frames: 10, lr: 1e-2, scale_factor: 0.5, ..Default::default() };
        let out = train_ul(&data, &cfg).unwrap();
        let c = &out.learning_curve;
        assert!(c.last().unwrap().train_loss < 0.05 * c[0].train_loss, "{:?}", c.last());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(train_ul::<f64>(&[], &TrainConfig::default()).is_err());
        let bad = TrainConfig { scale_factor: 0.3, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
