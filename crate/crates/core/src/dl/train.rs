//! Training the downlink network and measuring BLER.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{log_softmax_rows, AdamState, Model};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};
use crate::ul::TrainConfig;

use super::link::{DlLink, DlSample, Receiver};
use super::network::{llrs_from_logits, DlBatch, DlNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlEpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches.
    pub train_loss: f64,
    /// Fraction of symbols whose arg-max class is the transmitted one.
    pub symbol_accuracy: f64,
    /// Mean distance between the posterior-mean symbol and the transmitted one.
    pub euclidean: f64,
}

#[derive(Debug, Clone)]
pub struct DlTrainOutcome<T: Real> {
    pub net: DlNetwork<T>,
    pub curve: Vec<DlEpochStats>,
}

/// Network input for a sample: interfered estimate, reference, and the
/// symbols matched-filtered with the reference.
fn batch_of<T: Real>(link: &DlLink<T>, samples: &[&DlSample<T>]) -> Result<DlBatch<T>> {
    let prepared: Vec<_> = samples
        .iter()
        .map(|s| {
            let r = link.reference(s)?;
            let z = link.matched_filter(s, &r);
            Ok((r, z))
        })
        .collect::<Result<_>>()?;
    let frames: Vec<_> = samples
        .iter()
        .zip(&prepared)
        .map(|(s, (r, z))| (&s.pair.h_int_est, r, &z[..]))
        .collect();
    DlBatch::from_frames(&frames)
}

/// Frames `0..n_frames` spread round-robin over `sinr_grid`.
pub fn training_samples<T: Real>(link: &DlLink<T>, sinr_grid: &[f64], n_frames: usize, seed: u64) -> Result<Vec<DlSample<T>>> {
    if sinr_grid.is_empty() || n_frames == 0 {
        return Err(Error::Empty("training needs frames and an SINR grid".into()));
    }
    let links: Vec<DlLink<T>> = sinr_grid.iter().map(|&s| link.at_sinr(s)).collect::<Result<_>>()?;
    (0..n_frames as u64)
        .into_par_iter()
        .map(|f| links[f as usize % links.len()].sample(f, seed))
        .collect()
}

/// Cross-entropy training against transmitted constellation labels.
pub fn train_dl<T: Real>(
    link: &DlLink<T>,
    samples: &[DlSample<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&DlEpochStats),
) -> Result<DlTrainOutcome<T>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("DL training set is empty".into()));
    }
    let order = link.chain.order;
    let points = order.points::<f64>();
    let q = order.order();
    let mut net = DlNetwork::new(order, cfg.scale_factor, cfg.seed);
    let mut adam = AdamState::new(cfg.lr);
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        idx.shuffle(&mut rng_for(cfg.seed, Stream::Shuffle, epoch as u64));
        let (mut loss_sum, mut batches, mut correct, mut total, mut dist) = (0.0, 0, 0usize, 0usize, 0.0);
        for chunk in idx.chunks(cfg.batch_frames) {
            let chosen: Vec<&DlSample<T>> = chunk.iter().map(|&i| &samples[i]).collect();
            let batch = batch_of(link, &chosen)?;
            let labels: Vec<usize> = chosen.iter().flat_map(|s| s.labels.iter().copied()).collect();
            net.zero_grad();
            let (loss, logits) = net.batch_loss(&batch, &labels, true)?;
            adam.step(&mut net.params_mut())?;
            loss_sum += loss.as_f64();
            batches += 1;
            let lp = log_softmax_rows(logits.data(), q);
            for (row, &label) in lp.chunks_exact(q).zip(&labels) {
                let best = (0..q).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
                correct += usize::from(best == label);
                let mean = (0..q).fold(num_complex::Complex::new(0.0, 0.0), |acc, c| acc + points[c] * row[c].as_f64().exp());
                dist += (mean - points[label]).norm();
                total += 1;
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::State(format!("DL training diverged at epoch {epoch}")));
        }
        let stats = DlEpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            symbol_accuracy: correct as f64 / total as f64,
            euclidean: dist / total as f64,
        };
        on_epoch(&stats);
        curve.push(stats);
    }
    Ok(DlTrainOutcome { net, curve })
}

/// BLER of one receiver at one SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlerPoint {
    pub receiver: Receiver,
    pub sinr_db: f64,
    pub n_frames: usize,
    pub n_block_errors: usize,
    pub bler: f64,
}

/// Frames per parallel work unit in BLER runs.
const EVAL_CHUNK: usize = 50;

/// Block errors of each receiver on frames `0..n_frames` of `seed` at every
/// SINR in `sinr_grid`. The same channel, data and noise draws are reused at
/// every SINR; only the interferer gain changes.
///
/// `net = None` skips the network receiver.
pub fn evaluate_bler<T: Real>(
    net: Option<&DlNetwork<T>>,
    link: &DlLink<T>,
    sinr_grid: &[f64],
    n_frames: usize,
    seed: u64,
) -> Result<Vec<BlerPoint>> {
    evaluate_bler_with(net, link, sinr_grid, n_frames, seed, false)
}

/// As [`evaluate_bler`]; `flip_llrs` negates every LLR before decoding
/// (negative control).
pub fn evaluate_bler_with<T: Real>(
    net: Option<&DlNetwork<T>>,
    link: &DlLink<T>,
    sinr_grid: &[f64],
    n_frames: usize,
    seed: u64,
    flip_llrs: bool,
) -> Result<Vec<BlerPoint>> {
    if n_frames == 0 {
        return Err(Error::Precondition("n_frames must be >= 1".into()));
    }
    let receivers: Vec<Receiver> = Receiver::ALL.into_iter().filter(|r| net.is_some() || *r != Receiver::ModularNn).collect();
    let mut out = Vec::new();
    for &sinr in sinr_grid {
        let l = link.at_sinr(sinr)?;
        let starts: Vec<usize> = (0..n_frames).step_by(EVAL_CHUNK).collect();
        let errors: Vec<Vec<usize>> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + EVAL_CHUNK).min(n_frames);
                let samples: Vec<DlSample<T>> = (start..end).map(|f| l.sample(f as u64, seed)).collect::<Result<_>>()?;
                let nn_llrs = match net {
                    Some(net) => {
                        let refs: Vec<&DlSample<T>> = samples.iter().collect();
                        let logits = net.infer_batch(&batch_of(&l, &refs)?)?;
                        let per = l.chain.code.n_code;
                        Some(llrs_from_logits(&logits, l.chain.order)?.chunks_exact(per).map(<[T]>::to_vec).collect::<Vec<_>>())
                    }
                    None => None,
                };
                let mut errs = vec![0usize; receivers.len()];
                for (fi, s) in samples.iter().enumerate() {
                    for (ri, &r) in receivers.iter().enumerate() {
                        let mut llr = match r {
                            Receiver::ModularNn => nn_llrs.as_ref().expect("network present")[fi].clone(),
                            _ => l.classical_llrs(s, r)?,
                        };
                        if flip_llrs {
                            llr.iter_mut().for_each(|v| *v = -*v);
                        }
                        errs[ri] += usize::from(l.chain.receive(&llr, &s.frame.info_bits)?.is_error());
                    }
                }
                Ok(errs)
            })
            .collect::<Result<_>>()?;
        for (ri, &r) in receivers.iter().enumerate() {
            let n_err: usize = errors.iter().map(|e| e[ri]).sum();
            out.push(BlerPoint {
                receiver: r,
                sinr_db: sinr,
                n_frames,
                n_block_errors: n_err,
                bler: n_err as f64 / n_frames as f64,
            });
        }
    }
    Ok(out)
}

/// SINR at which a BLER curve crosses `target`, by linear interpolation of
/// log10(BLER) between grid points. `None` if the curve never crosses.
pub fn sinr_at_bler(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let floor = 1e-4;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= target && y1 <= target {
            let (l0, l1, lt) = (y0.max(floor).log10(), y1.max(floor).log10(), target.log10());
            if (l0 - l1).abs() < 1e-12 {
                return Some(x0);
            }
            return Some(x0 + (x1 - x0) * (l0 - lt) / (l0 - l1));
        }
    }
    None
}
