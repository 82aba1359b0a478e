//! Inference latency measurement. Timing numbers depend on the machine and
//! are reported, never asserted.

use std::ops::Range;
use std::time::Instant;

use serde::Serialize;

use crate::error::BenchResult;

/// Published per-frame processing time on dedicated hardware, for scale.
pub const REFERENCE_US: f64 = 144.0;
/// Length of one radio frame.
pub const FRAME_BUDGET_US: f64 = 1000.0;

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub model: String,
    pub batch_size: usize,
    pub n_frames: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub reference_us: f64,
    pub frame_budget_us: f64,
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Runs `infer` over `n_frames` frames in batches of each size and reports
/// per-frame latency statistics over the batches. One untimed warm-up batch
/// precedes each size.
pub fn time_batches(
    model: &str,
    batch_sizes: &[usize],
    n_frames: usize,
    mut infer: impl FnMut(Range<usize>) -> intmit::Result<()>,
) -> BenchResult<Vec<TimingRow>> {
    let mut rows = Vec::with_capacity(batch_sizes.len());
    for &b in batch_sizes {
        let b = b.min(n_frames).max(1);
        infer(0..b)?;
        let mut per_frame = Vec::with_capacity(n_frames.div_ceil(b));
        let mut start = 0;
        while start < n_frames {
            let end = (start + b).min(n_frames);
            let t0 = Instant::now();
            infer(start..end)?;
            per_frame.push(t0.elapsed().as_secs_f64() * 1e6 / (end - start) as f64);
            start = end;
        }
        let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
        per_frame.sort_by(f64::total_cmp);
        rows.push(TimingRow {
            model: model.into(),
            batch_size: b,
            n_frames,
            mean_us: mean,
            p50_us: percentile(&per_frame, 0.5),
            p95_us: percentile(&per_frame, 0.95),
            reference_us: REFERENCE_US,
            frame_budget_us: FRAME_BUDGET_US,
        });
    }
    Ok(rows)
}
