//! Finite-difference gradient checks of every layer type and of the three
//! networks, plus a negative control with a deliberately corrupted gradient.

use intmit::dl::{DlBatch, DlNetwork};
use intmit::nn::{mse_loss, randomize_biases, BiLstm, Conv1d, Dense, GradCheck, GradCheckReport, Layer, Lstm, Padding, Relu, Sequential, Tensor};
use intmit::phy::{gen_channel, CellScenario};
use intmit::seed::{rng_for, Stream};
use intmit::txrx::QamOrder;
use intmit::ul::{MonolithicNet, RowDenoiser, UlNetwork};
use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use crate::error::BenchResult;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub check: String,
    pub params_checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Whether the check is supposed to pass; false for negative controls.
    pub expect_pass: bool,
    pub pass: bool,
}

impl GradCheckRow {
    fn new(check: &str, r: &GradCheckReport, expect_pass: bool) -> Self {
        GradCheckRow {
            check: check.into(),
            params_checked: r.checked,
            max_rel_err: r.max_rel_err,
            tolerance: r.tolerance,
            expect_pass,
            pass: r.pass,
        }
    }

    pub fn as_expected(&self) -> bool {
        self.pass == self.expect_pass
    }
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(seed, Stream::Data, 0);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn seq_report(net: &mut Sequential<f64>, x: &Tensor<f64>, t: &Tensor<f64>, tamper: bool) -> BenchResult<GradCheckReport> {
    let eval = |m: &mut Sequential<f64>, bp: bool| {
        let y = m.forward(x)?;
        let (l, g) = mse_loss(&y, t)?;
        if bp {
            m.backward(&g)?;
        }
        Ok(l)
    };
    let gc = GradCheck::default();
    Ok(if tamper {
        gc.run_tampered(net, eval, |g| g[0][1] *= 1.5)?
    } else {
        gc.run(net, eval)?
    })
}

fn denoiser_report<M: RowDenoiser<f64>>(net: &mut M, x: &Tensor<f64>, t: &Tensor<f64>) -> BenchResult<GradCheckReport> {
    Ok(GradCheck::default().run(net, |n, bp| {
        let y = if bp { n.forward(x)? } else { n.infer(x)? };
        let (l, d) = mse_loss(&y, t)?;
        if bp {
            n.backward(&d)?;
        }
        Ok(l)
    })?)
}

/// Runs the whole suite in 64-bit precision with the default tolerance.
pub fn run_suite() -> BenchResult<Vec<GradCheckRow>> {
    let mut rows = Vec::new();
    let mut rng = rng_for(11, Stream::Init, 0);

    let mut dense = Sequential::new(vec![
        Layer::Dense(Dense::new(3, 4, &mut rng)),
        Layer::Relu(Relu::new()),
        Layer::Dense(Dense::new(4, 2, &mut rng)),
    ]);
    randomize_biases(&mut dense, 1, 0.1);
    let r = seq_report(&mut dense, &rand_tensor(&[5, 3], 1), &rand_tensor(&[5, 2], 2), false)?;
    rows.push(GradCheckRow::new("dense+relu", &r, true));

    for (padding, name, out_len) in [(Padding::Same, "conv1d_same", 6), (Padding::Valid, "conv1d_valid", 4)] {
        let mut conv = Sequential::new(vec![
            Layer::Conv1d(Conv1d::new(2, 3, padding, &mut rng)),
            Layer::Relu(Relu::new()),
            Layer::Conv1d(Conv1d::new(3, 2, padding, &mut rng)),
        ]);
        randomize_biases(&mut conv, 2, 0.1);
        let r = seq_report(&mut conv, &rand_tensor(&[2, 6, 2], 3), &rand_tensor(&[2, out_len, 2], 4), false)?;
        rows.push(GradCheckRow::new(name, &r, true));
    }

    let mut lstm = Sequential::new(vec![
        Layer::Dense(Dense::new(2, 3, &mut rng)),
        Layer::Lstm(Lstm::new(3, 4, &mut rng)),
        Layer::Lstm(Lstm::new(4, 2, &mut rng)),
    ]);
    let r = seq_report(&mut lstm, &rand_tensor(&[3, 5, 2], 5), &rand_tensor(&[3, 5, 2], 6), false)?;
    rows.push(GradCheckRow::new("lstm", &r, true));

    let mut bilstm = Sequential::new(vec![Layer::BiLstm(BiLstm::new(2, 3, &mut rng)), Layer::Dense(Dense::new(6, 2, &mut rng))]);
    randomize_biases(&mut bilstm, 3, 0.1);
    let r = seq_report(&mut bilstm, &rand_tensor(&[2, 4, 2], 10), &rand_tensor(&[2, 4, 2], 11), false)?;
    rows.push(GradCheckRow::new("bilstm", &r, true));

    let x = rand_tensor(&[2, 5, 2], 7);
    let t = x.map(|v| v * 0.5);
    let mut ul = UlNetwork::<f64>::new(0.25, 6);
    randomize_biases(&mut ul, 1, 0.1);
    rows.push(GradCheckRow::new("ul_modular_sf0.25", &denoiser_report(&mut ul, &x, &t)?, true));
    let mut mono = MonolithicNet::<f64>::new(0.125, 6);
    randomize_biases(&mut mono, 2, 0.1);
    rows.push(GradCheckRow::new("ul_monolithic_sf0.125", &denoiser_report(&mut mono, &x, &t)?, true));

    let s = CellScenario { bs_ant: 2, ue_ant: 1, n_re: 6, n_taps: 2, ..Default::default() };
    let mut net = DlNetwork::<f64>::new(QamOrder::Qpsk, 0.25, 9);
    let pts = QamOrder::Qpsk.points::<f64>();
    let frames: Vec<_> = (0..2u64)
        .map(|i| {
            let sym: Vec<Complex<f64>> = (0..6).map(|j| pts[(j + i as usize) % 4] * 0.9).collect();
            (gen_channel::<f64>(&s, 10 + i).h, gen_channel::<f64>(&s, 20 + i).h, sym)
        })
        .collect();
    let refs: Vec<_> = frames.iter().map(|(a, b, c)| (a, b, &c[..])).collect();
    let batch = DlBatch::from_frames(&refs)?;
    let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
    randomize_biases(&mut net, 1, 0.1);
    let r = GradCheck::default().run(&mut net, |n, bp| Ok(n.batch_loss(&batch, &labels, bp)?.0))?;
    rows.push(GradCheckRow::new("dl_modular_sf0.25", &r, true));

    let mut control = Sequential::new(vec![Layer::Dense(Dense::<f64>::new(3, 2, &mut rng))]);
    let r = seq_report(&mut control, &rand_tensor(&[4, 3], 8), &rand_tensor(&[4, 2], 9), true)?;
    rows.push(GradCheckRow::new("negative_control_corrupted_dense", &r, false));
    Ok(rows)
}
