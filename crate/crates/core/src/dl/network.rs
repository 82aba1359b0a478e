//! The downlink constellation-recovery network.
//!
//! Two conv extractors map the interfered estimate `H_I` and the clean
//! reference `H` to per-RE features (mean-pooled over antenna rows); their
//! difference, passed through a dense fusion layer, is the interference
//! feature `i_est`. Received symbols are embedded into the same space,
//! `i_est` is subtracted, an LSTM runs over the symbol sequence and a dense
//! head scores the constellation classes.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::nn::{cross_entropy_loss, log_softmax_rows, Conv1d, Dense, Layer, Lstm, Model, Padding, Param, Relu, Sequential, Tensor};
use crate::phy::CArray3;
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};
use crate::txrx::{maxlog_llrs, QamOrder};
use crate::ul::{preprocess, scaled};

/// Feature-space interference estimate, `[S][width]` or `[1][width]`.
#[derive(Debug, Clone)]
pub struct InterferenceFeature<T: Real> {
    pub i_est: Tensor<T>,
}

/// Logits and the bit LLRs derived from them.
#[derive(Debug, Clone)]
pub struct Classification<T: Real> {
    /// `[S][Q]`.
    pub logits: Tensor<T>,
    /// `S · log2(Q)` max-log LLRs in transmission order.
    pub llrs: Vec<T>,
}

/// Inputs of a minibatch of `B` frames with `R = m·n` antenna rows.
#[derive(Debug, Clone)]
pub struct DlBatch<T: Real> {
    /// `[B·R][k][2]`.
    pub h_int: Tensor<T>,
    /// `[B·R][k][2]`.
    pub h_ref: Tensor<T>,
    /// `[B][S][2]` received symbols after combining.
    pub symbols: Tensor<T>,
    pub rows: usize,
}

impl<T: Real> DlBatch<T> {
    pub fn frames(&self) -> usize {
        self.symbols.shape()[0]
    }

    pub fn from_frames(frames: &[(&CArray3<T>, &CArray3<T>, &[Complex<T>])]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Empty("no frames in batch".into()))?;
        let (m, n, _) = first.0.dim();
        let s = first.2.len();
        let mut hi = Vec::with_capacity(frames.len());
        let mut hr = Vec::with_capacity(frames.len());
        let mut sym = Vec::with_capacity(frames.len() * s * 2);
        for (a, b, c) in frames {
            if a.dim() != b.dim() || a.dim().0 * a.dim().1 != m * n || c.len() != s {
                return Err(Error::Shape("frames in a batch must share shapes".into()));
            }
            hi.push(preprocess(a));
            hr.push(preprocess(b));
            for v in c.iter() {
                sym.push(v.re);
                sym.push(v.im);
            }
        }
        Ok(DlBatch {
            h_int: Tensor::concat_outer(&hi)?,
            h_ref: Tensor::concat_outer(&hr)?,
            symbols: Tensor::from_vec(&[frames.len(), s, 2], sym)?,
            rows: m * n,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DlNetwork<T: Real> {
    pub extractor_clean: Sequential<T>,
    pub extractor_int: Sequential<T>,
    pub fusion: Sequential<T>,
    pub const_embed: Sequential<T>,
    pub corrector: Sequential<T>,
    pub classifier: Sequential<T>,
    pub order: QamOrder,
    pub scale_factor: f64,
}

fn extractor<T: Real, R: rand::Rng>(c1: usize, c2: usize, rng: &mut R) -> Sequential<T> {
    Sequential::new(vec![
        Layer::Conv1d(Conv1d::new(2, c1, Padding::Same, rng)),
        Layer::Relu(Relu::new()),
        Layer::Conv1d(Conv1d::new(c1, c2, Padding::Same, rng)),
        Layer::Relu(Relu::new()),
    ])
}

/// Mean over the `rows` antenna rows of each frame: `[B·R][k][c]` to `[B][k][c]`.
fn pool_rows<T: Real>(x: &Tensor<T>, rows: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 3 || rows == 0 || s[0] % rows != 0 {
        return Err(Error::Shape(format!("cannot pool {s:?} over {rows} rows")));
    }
    let (b, per) = (s[0] / rows, s[1] * s[2]);
    let inv = T::lit(1.0 / rows as f64);
    let mut out = vec![T::zero(); b * per];
    for (r, chunk) in x.data().chunks_exact(per).enumerate() {
        for (o, &v) in out[(r / rows) * per..(r / rows + 1) * per].iter_mut().zip(chunk) {
            *o += v * inv;
        }
    }
    Tensor::from_vec(&[b, s[1], s[2]], out)
}

/// Adjoint of [`pool_rows`], scaled by `sign`.
fn unpool_rows<T: Real>(d: &Tensor<T>, rows: usize, sign: T) -> Result<Tensor<T>> {
    let s = d.shape();
    let per = s[1] * s[2];
    let scale = sign * T::lit(1.0 / rows as f64);
    let mut out = Vec::with_capacity(s[0] * rows * per);
    for chunk in d.data().chunks_exact(per) {
        for _ in 0..rows {
            out.extend(chunk.iter().map(|&v| v * scale));
        }
    }
    Tensor::from_vec(&[s[0] * rows, s[1], s[2]], out)
}

/// Broadcasts `[1][w]` or `[S][w]` interference features to `[B][S][w]`.
fn expand_iest<T: Real>(i_est: &Tensor<T>, b: usize, s: usize) -> Result<Tensor<T>> {
    let sh = i_est.shape();
    let w = i_est.last_dim();
    let per = match sh {
        [1, _] | [1, 1, _] => {
            let row = i_est.data();
            (0..s).flat_map(|_| row.iter().copied()).collect::<Vec<_>>()
        }
        [x, _] if *x == s => i_est.data().to_vec(),
        [bb, x, _] if *bb == b && *x == s => return Ok(i_est.clone()),
        _ => return Err(Error::Shape(format!("i_est {sh:?} does not fit {b} frames of {s} symbols"))),
    };
    let data: Vec<T> = (0..b).flat_map(|_| per.iter().copied()).collect();
    Tensor::from_vec(&[b, s, w], data)
}

impl<T: Real> DlNetwork<T> {
    /// Default widths: extractors 2→16→32, fusion 32→32, embedding 2→32,
    /// LSTM 64, classifier → Q; hidden widths scaled by `scale_factor`.
    pub fn new(order: QamOrder, scale_factor: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Init, 2);
        let (c1, c2) = (scaled(16, scale_factor), scaled(32, scale_factor));
        let hid = scaled(64, scale_factor);
        DlNetwork {
            extractor_clean: extractor(c1, c2, &mut rng),
            extractor_int: extractor(c1, c2, &mut rng),
            fusion: Sequential::new(vec![Layer::Dense(Dense::new(c2, c2, &mut rng))]),
            const_embed: Sequential::new(vec![Layer::Dense(Dense::new(2, c2, &mut rng))]),
            corrector: Sequential::new(vec![Layer::Lstm(Lstm::new(c2, hid, &mut rng))]),
            classifier: Sequential::new(vec![Layer::Dense(Dense::new(hid, order.order(), &mut rng))]),
            order,
            scale_factor,
        }
    }

    pub fn feature_width(&self) -> usize {
        match &self.fusion.layers[0] {
            Layer::Dense(d) => d.output_dim(),
            _ => unreachable!("fusion is a dense layer"),
        }
    }

    /// `i_est = fusion(pool(extractor_int(H_I)) − pool(extractor_clean(H)))`
    /// for a single frame; one feature row per resource element.
    pub fn estimate_interference(&self, h_i: &CArray3<T>, h_ref: &CArray3<T>) -> Result<InterferenceFeature<T>> {
        if h_i.dim() != h_ref.dim() {
            return Err(Error::Shape(format!("H_I {:?} vs reference {:?}", h_i.dim(), h_ref.dim())));
        }
        let rows = h_i.dim().0 * h_i.dim().1;
        let fi = pool_rows(&self.extractor_int.infer(&preprocess(h_i))?, rows)?;
        let fc = pool_rows(&self.extractor_clean.infer(&preprocess(h_ref))?, rows)?;
        let i_est = self.fusion.infer(&fi.sub(&fc)?)?;
        let (k, w) = (i_est.shape()[1], i_est.shape()[2]);
        Ok(InterferenceFeature { i_est: i_est.reshape(&[k, w])? })
    }

    /// `const_embed(c_i) − i_est`, then the LSTM corrector; `[S][hidden]`.
    pub fn mitigate_symbols(&self, c_i: &[Complex<T>], feat: &InterferenceFeature<T>) -> Result<Tensor<T>> {
        let s = c_i.len();
        let x = Tensor::from_vec(&[1, s, 2], c_i.iter().flat_map(|v| [v.re, v.im]).collect())?;
        let f = self.const_embed.infer(&x)?.sub(&expand_iest(&feat.i_est, 1, s)?)?;
        let y = self.corrector.infer(&f)?;
        let h = y.last_dim();
        y.reshape(&[s, h])
    }

    /// Class logits and max-log bit LLRs from corrected features `[S][hidden]`.
    pub fn classify_constellation(&self, features: &Tensor<T>) -> Result<Classification<T>> {
        let logits = self.classifier.infer(features)?;
        let llrs = llrs_from_logits(&logits, self.order)?;
        Ok(Classification { logits, llrs })
    }

    /// Logits `[B][S][Q]` for a batch, without caching.
    pub fn infer_batch(&self, batch: &DlBatch<T>) -> Result<Tensor<T>> {
        let fi = pool_rows(&self.extractor_int.infer(&batch.h_int)?, batch.rows)?;
        let fc = pool_rows(&self.extractor_clean.infer(&batch.h_ref)?, batch.rows)?;
        let i_est = self.fusion.infer(&fi.sub(&fc)?)?;
        let f = self.const_embed.infer(&batch.symbols)?.sub(&i_est)?;
        self.classifier.infer(&self.corrector.infer(&f)?)
    }

    /// Cached forward pass over a batch.
    pub fn forward_batch(&mut self, batch: &DlBatch<T>) -> Result<Tensor<T>> {
        let fi = pool_rows(&self.extractor_int.forward(&batch.h_int)?, batch.rows)?;
        let fc = pool_rows(&self.extractor_clean.forward(&batch.h_ref)?, batch.rows)?;
        let i_est = self.fusion.forward(&fi.sub(&fc)?)?;
        let f = self.const_embed.forward(&batch.symbols)?.sub(&i_est)?;
        self.classifier.forward(&self.corrector.forward(&f)?)
    }

    /// Back-propagates `dlogits` through the last [`DlNetwork::forward_batch`].
    pub fn backward_batch(&mut self, dlogits: &Tensor<T>, rows: usize) -> Result<()> {
        let d_f = self.corrector.backward(&self.classifier.backward(dlogits)?)?;
        self.const_embed.backward(&d_f)?;
        let d_diff = self.fusion.backward(&d_f.map(|v| -v))?;
        self.extractor_int.backward(&unpool_rows(&d_diff, rows, T::one())?)?;
        self.extractor_clean.backward(&unpool_rows(&d_diff, rows, -T::one())?)?;
        Ok(())
    }

    /// Cross-entropy of a batch against transmitted class labels
    /// (`B·S` labels), with gradients accumulated when `backprop` is set.
    pub fn batch_loss(&mut self, batch: &DlBatch<T>, labels: &[usize], backprop: bool) -> Result<(T, Tensor<T>)> {
        let logits = if backprop { self.forward_batch(batch)? } else { self.infer_batch(batch)? };
        let (loss, grad) = cross_entropy_loss(&logits, labels)?;
        if backprop {
            self.backward_batch(&grad, batch.rows)?;
        }
        Ok((loss, logits))
    }
}

/// Max-log LLRs from logits `[..][Q]` via the class log-posteriors.
pub fn llrs_from_logits<T: Real>(logits: &Tensor<T>, order: QamOrder) -> Result<Vec<T>> {
    let q = order.order();
    if logits.last_dim() != q {
        return Err(Error::Shape(format!("{} logits per symbol for Q = {q}", logits.last_dim())));
    }
    maxlog_llrs(&log_softmax_rows(logits.data(), q), order)
}

impl<T: Real> Model<T> for DlNetwork<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = self.extractor_clean.named_params("extractor_clean");
        v.extend(self.extractor_int.named_params("extractor_int"));
        v.extend(self.fusion.named_params("fusion"));
        v.extend(self.const_embed.named_params("const_embed"));
        v.extend(self.corrector.named_params("corrector"));
        v.extend(self.classifier.named_params("classifier"));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.extractor_clean.params_mut();
        v.extend(self.extractor_int.params_mut());
        v.extend(self.fusion.params_mut());
        v.extend(self.const_embed.params_mut());
        v.extend(self.corrector.params_mut());
        v.extend(self.classifier.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{randomize_biases, GradCheck};
    use crate::phy::{gen_channel, CellScenario};
    use rand::Rng;

    fn scenario() -> CellScenario {
        CellScenario { bs_ant: 2, ue_ant: 2, n_re: 6, ..Default::default() }
    }

    fn symbols(s: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = rng_for(seed, Stream::Data, 0);
        (0..s).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn tied_extractors_with_equal_inputs_give_bias_only_features() {
        let mut net = DlNetwork::<f64>::new(QamOrder::Qpsk, 1.0, 1);
        net.extractor_clean = net.extractor_int.clone();
        let h = gen_channel::<f64>(&CellScenario::default(), 2).h;
        let feat = net.estimate_interference(&h, &h).unwrap();
        let Layer::Dense(fusion) = &net.fusion.layers[0] else { unreachable!() };
        let bias = fusion.b.value.data();
        for row in feat.i_est.data().chunks_exact(bias.len()) {
            assert_eq!(row, bias);
        }
    }

    #[test]
    fn zero_interference_feature_reduces_to_embed_then_lstm() {
        let net = DlNetwork::<f64>::new(QamOrder::Qpsk, 1.0, 3);
        let c = symbols(10, 4);
        let zero = InterferenceFeature { i_est: Tensor::zeros(&[1, net.feature_width()]) };
        let y = net.mitigate_symbols(&c, &zero).unwrap();
        let x = Tensor::from_vec(&[1, 10, 2], c.iter().flat_map(|v| [v.re, v.im]).collect()).unwrap();
        let direct = net.corrector.infer(&net.const_embed.infer(&x).unwrap()).unwrap();
        assert_eq!(y.data(), direct.data());
        assert_eq!(y.shape(), &[10, 64]);
    }

    #[test]
    fn symbol_order_matters() {
        let net = DlNetwork::<f64>::new(QamOrder::Qpsk, 1.0, 5);
        let c = symbols(8, 6);
        let mut rev = c.clone();
        rev.reverse();
        let zero = InterferenceFeature { i_est: Tensor::zeros(&[1, net.feature_width()]) };
        let a = net.mitigate_symbols(&c, &zero).unwrap();
        let b = net.mitigate_symbols(&rev, &zero).unwrap();
        let a_last: Vec<f64> = a.data()[7 * 64..].to_vec();
        let b_first_of_rev: Vec<f64> = b.data()[..64].to_vec();
        assert_ne!(a_last, b_first_of_rev);
    }

    #[test]
    fn llr_reference_cases() {
        let uniform = Tensor::from_vec(&[2, 4], vec![0.7f64; 8]).unwrap();
        assert!(llrs_from_logits(&uniform, QamOrder::Qpsk).unwrap().iter().all(|&l| l == 0.0));
        for q in 0..4 {
            let mut v = vec![-5.0f64; 4];
            v[q] = 5.0;
            let llr = llrs_from_logits(&Tensor::from_vec(&[1, 4], v).unwrap(), QamOrder::Qpsk).unwrap();
            for j in 0..2 {
                assert_eq!(QamOrder::Qpsk.bit(q, j) == 0, llr[j] > 0.0);
            }
        }
    }

    #[test]
    fn batch_path_matches_single_frame_path() {
        let net = DlNetwork::<f64>::new(QamOrder::Qpsk, 0.5, 7);
        let s = scenario();
        let (hi, hr) = (gen_channel::<f64>(&s, 1).h, gen_channel::<f64>(&s, 2).h);
        let c = symbols(6, 3);
        let batch = DlBatch::from_frames(&[(&hi, &hr, &c[..])]).unwrap();
        let logits = net.infer_batch(&batch).unwrap();
        let single = net.classify_constellation(&net.mitigate_symbols(&c, &net.estimate_interference(&hi, &hr).unwrap()).unwrap()).unwrap();
        for (a, b) in logits.data().iter().zip(single.logits.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn passes_grad_check() {
        let s = scenario();
        let mut net = DlNetwork::<f64>::new(QamOrder::Qpsk, 0.25, 9);
        let frames: Vec<_> = (0..2).map(|i| (gen_channel::<f64>(&s, 10 + i).h, gen_channel::<f64>(&s, 20 + i).h, symbols(6, i))).collect();
        let refs: Vec<_> = frames.iter().map(|(a, b, c)| (a, b, &c[..])).collect();
        let batch = DlBatch::from_frames(&refs).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 4).collect();
        randomize_biases(&mut net, 1, 0.1);
        let report = GradCheck::default()
            .run(&mut net, |n, bp| Ok(n.batch_loss(&batch, &labels, bp)?.0))
            .unwrap();
        assert!(report.pass, "{report:?}");
    }
}
