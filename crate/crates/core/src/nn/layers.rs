//! Dense, width-2 convolution, LSTM and ReLU layers with hand-written
//! reverse-mode gradients.
//!
//! Sequence tensors are laid out `[batch][length][channels]`. Every layer keeps
//! the activations of its last [`Layer::forward`] call; [`Layer::backward`]
//! consumes them and accumulates into the parameter gradients. Calling
//! `backward` without a cached forward pass is a state error.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::tensor::Tensor;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T: Real> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

fn glorot<T: Real, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-limit..limit)))
}

fn no_cache() -> Error {
    Error::State("backward called before forward".into())
}

/// Accumulate column sums of a `[rows][cols]` buffer into `out`.
fn add_col_sums<T: Real>(src: &[T], cols: usize, out: &mut [T]) {
    for row in src.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Affine map over the last axis: `y = x Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Dense<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            w: Param::new(glorot(&[output, input], input, output, rng)),
            b: Param::new(Tensor::zeros(&[output])),
            cache: None,
        }
    }

    pub fn from_params(w: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        if w.shape().len() != 2 || b.shape() != [w.shape()[0]] {
            return Err(shape_err!("dense params w {:?} b {:?}", w.shape(), b.shape()));
        }
        Ok(Dense {
            w: Param::new(w),
            b: Param::new(b),
            cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (inp, out) = (self.input_dim(), self.output_dim());
        if x.last_dim() != inp || x.shape().is_empty() {
            return Err(shape_err!("dense expects last axis {inp}, got {:?}", x.shape()));
        }
        let rows = x.leading();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = out;
        let mut y = Tensor::zeros(&shape);
        for row in y.data_mut().chunks_exact_mut(out) {
            row.copy_from_slice(self.b.value.data());
        }
        T::gemm(
            rows,
            inp,
            out,
            T::one(),
            x.data(),
            inp as isize,
            1,
            self.w.value.data(),
            1,
            inp as isize,
            T::one(),
            y.data_mut(),
            out as isize,
            1,
        );
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(no_cache)?;
        let (inp, out) = (self.input_dim(), self.output_dim());
        let rows = x.leading();
        if dy.len() != rows * out {
            return Err(shape_err!("dense backward dy {:?}", dy.shape()));
        }
        T::gemm(
            out,
            rows,
            inp,
            T::one(),
            dy.data(),
            1,
            out as isize,
            x.data(),
            inp as isize,
            1,
            T::one(),
            self.w.grad.data_mut(),
            inp as isize,
            1,
        );
        add_col_sums(dy.data(), out, self.b.grad.data_mut());
        let mut dx = Tensor::zeros(x.shape());
        T::gemm(
            rows,
            out,
            inp,
            T::one(),
            dy.data(),
            out as isize,
            1,
            self.w.value.data(),
            inp as isize,
            1,
            T::zero(),
            dx.data_mut(),
            inp as isize,
            1,
        );
        Ok(dx)
    }
}

/// Padding mode of [`Conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// One leading zero; output length equals input length.
    Same,
    /// No padding; output length is input length minus one.
    Valid,
}

/// Kernel-width-2, stride-1 convolution over the length axis.
///
/// Kernels are stored `[out_ch][in_ch][2]`; tap 0 multiplies the earlier
/// position and tap 1 the later one.
#[derive(Debug, Clone)]
pub struct Conv1d<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
    pub padding: Padding,
    cache: Option<(Vec<T>, Vec<usize>)>,
}

impl<T: Real> Conv1d<T> {
    pub const WIDTH: usize = 2;

    pub fn new<R: Rng>(input: usize, output: usize, padding: Padding, rng: &mut R) -> Self {
        Conv1d {
            w: Param::new(glorot(&[output, input, 2], input * 2, output * 2, rng)),
            b: Param::new(Tensor::zeros(&[output])),
            padding,
            cache: None,
        }
    }

    pub fn from_params(w: Tensor<T>, b: Tensor<T>, padding: Padding) -> Result<Self> {
        let s = w.shape();
        if s.len() != 3 || s[2] != 2 || b.shape() != [s[0]] {
            return Err(shape_err!("conv1d params w {:?} b {:?}", s, b.shape()));
        }
        Ok(Conv1d {
            w: Param::new(w),
            b: Param::new(b),
            padding,
            cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn output_len(&self, len: usize) -> usize {
        match self.padding {
            Padding::Same => len,
            Padding::Valid => len.saturating_sub(1),
        }
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.in_channels() {
            return Err(shape_err!(
                "conv1d expects [batch][len][{}], got {:?}",
                self.in_channels(),
                s
            ));
        }
        if self.padding == Padding::Valid && s[1] < 2 {
            return Err(shape_err!("valid conv1d needs length >= 2, got {}", s[1]));
        }
        Ok((s[0], s[1], s[2]))
    }

    fn im2col(&self, x: &Tensor<T>) -> Result<(Vec<T>, usize, usize)> {
        let (batch, len, ch) = self.check(x)?;
        let lout = self.output_len(len);
        let width = ch * 2;
        let mut cols = vec![T::zero(); batch * lout * width];
        let src = x.data();
        for b in 0..batch {
            for t in 0..lout {
                let (p0, p1) = match self.padding {
                    Padding::Same => (t.checked_sub(1), t),
                    Padding::Valid => (Some(t), t + 1),
                };
                let row = &mut cols[(b * lout + t) * width..(b * lout + t + 1) * width];
                let x1 = &src[(b * len + p1) * ch..(b * len + p1 + 1) * ch];
                if let Some(p0) = p0 {
                    let x0 = &src[(b * len + p0) * ch..(b * len + p0 + 1) * ch];
                    for c in 0..ch {
                        row[2 * c] = x0[c];
                    }
                }
                for c in 0..ch {
                    row[2 * c + 1] = x1[c];
                }
            }
        }
        Ok((cols, batch, lout))
    }

    fn apply(&self, cols: &[T], batch: usize, lout: usize) -> Tensor<T> {
        let (width, out) = (self.in_channels() * 2, self.out_channels());
        let mut y = Tensor::zeros(&[batch, lout, out]);
        for row in y.data_mut().chunks_exact_mut(out) {
            row.copy_from_slice(self.b.value.data());
        }
        T::gemm(
            batch * lout,
            width,
            out,
            T::one(),
            cols,
            width as isize,
            1,
            self.w.value.data(),
            1,
            width as isize,
            T::one(),
            y.data_mut(),
            out as isize,
            1,
        );
        y
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, batch, lout) = self.im2col(x)?;
        Ok(self.apply(&cols, batch, lout))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, batch, lout) = self.im2col(x)?;
        let y = self.apply(&cols, batch, lout);
        self.cache = Some((cols, x.shape().to_vec()));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (cols, in_shape) = self.cache.take().ok_or_else(no_cache)?;
        let (batch, len, ch) = (in_shape[0], in_shape[1], in_shape[2]);
        let lout = self.output_len(len);
        let (width, out) = (ch * 2, self.out_channels());
        dy.expect_shape(&[batch, lout, out], "conv1d backward")?;
        let rows = batch * lout;
        T::gemm(
            out,
            rows,
            width,
            T::one(),
            dy.data(),
            1,
            out as isize,
            &cols,
            width as isize,
            1,
            T::one(),
            self.w.grad.data_mut(),
            width as isize,
            1,
        );
        add_col_sums(dy.data(), out, self.b.grad.data_mut());
        let mut dcols = vec![T::zero(); rows * width];
        T::gemm(
            rows,
            out,
            width,
            T::one(),
            dy.data(),
            out as isize,
            1,
            self.w.value.data(),
            width as isize,
            1,
            T::zero(),
            &mut dcols,
            width as isize,
            1,
        );
        let mut dx = Tensor::zeros(&in_shape);
        let dst = dx.data_mut();
        for b in 0..batch {
            for t in 0..lout {
                let (p0, p1) = match self.padding {
                    Padding::Same => (t.checked_sub(1), t),
                    Padding::Valid => (Some(t), t + 1),
                };
                let row = &dcols[(b * lout + t) * width..(b * lout + t + 1) * width];
                if let Some(p0) = p0 {
                    let d0 = &mut dst[(b * len + p0) * ch..(b * len + p0 + 1) * ch];
                    for c in 0..ch {
                        d0[c] += row[2 * c];
                    }
                }
                let d1 = &mut dst[(b * len + p1) * ch..(b * len + p1 + 1) * ch];
                for c in 0..ch {
                    d1[c] += row[2 * c + 1];
                }
            }
        }
        Ok(dx)
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn tanh<T: Real>(x: T) -> T {
    // One exp instead of libm tanh; saturates cleanly for large |x|.
    let two = T::one() + T::one();
    two / (T::one() + (-(two * x)).exp()) - T::one()
}

/// `[batch][len][w]` <-> `[len][batch][w]`.
fn swap_outer<T: Real>(src: &[T], a: usize, b: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    for i in 0..a {
        for j in 0..b {
            out[(j * a + i) * w..(j * a + i + 1) * w].copy_from_slice(&src[(i * b + j) * w..(i * b + j + 1) * w]);
        }
    }
    out
}

/// Time-major buffers kept between forward and backward.
struct LstmCache<T: Real> {
    /// Input, `[len][batch][in]`.
    x: Vec<T>,
    batch: usize,
    len: usize,
    /// Activated gates `[len][batch][4H]`, blocks ordered i, f, g, o.
    gates: Vec<T>,
    /// Cell states `[len][batch][H]`.
    cells: Vec<T>,
    /// `tanh(c_t)`.
    cells_tanh: Vec<T>,
    /// Hidden outputs `[len][batch][H]`.
    hidden: Vec<T>,
}

/// Single-layer unidirectional LSTM returning the hidden state at every step.
///
/// Gate blocks in `w_ih`, `w_hh` and `b` are ordered input, forget, cell,
/// output.
pub struct Lstm<T: Real> {
    pub w_ih: Param<T>,
    pub w_hh: Param<T>,
    pub b: Param<T>,
    cache: Option<LstmCache<T>>,
}

impl<T: Real> Clone for Lstm<T> {
    fn clone(&self) -> Self {
        Lstm {
            w_ih: self.w_ih.clone(),
            w_hh: self.w_hh.clone(),
            b: self.b.clone(),
            cache: None,
        }
    }
}

impl<T: Real> std::fmt::Debug for Lstm<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lstm")
            .field("input", &self.input_dim())
            .field("hidden", &self.hidden_size())
            .finish()
    }
}

impl<T: Real> Lstm<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let s = 1.0 / (hidden as f64).sqrt();
        let w_ih = Tensor::from_fn(&[4 * hidden, input], |_| T::lit(rng.gen_range(-s..s)));
        let w_hh = Tensor::from_fn(&[4 * hidden, hidden], |_| T::lit(rng.gen_range(-s..s)));
        let b = Tensor::from_fn(&[4 * hidden], |i| {
            if (hidden..2 * hidden).contains(&i) {
                T::one()
            } else {
                T::zero()
            }
        });
        Lstm {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b: Param::new(b),
            cache: None,
        }
    }

    pub fn from_params(w_ih: Tensor<T>, w_hh: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        let h = w_hh.shape().get(1).copied().unwrap_or(0);
        if w_hh.shape() != [4 * h, h] || w_ih.shape().len() != 2 || w_ih.shape()[0] != 4 * h || b.shape() != [4 * h]
        {
            return Err(shape_err!(
                "lstm params w_ih {:?} w_hh {:?} b {:?}",
                w_ih.shape(),
                w_hh.shape(),
                b.shape()
            ));
        }
        Ok(Lstm {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b: Param::new(b),
            cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.value.shape()[1]
    }

    fn run(&self, x: &Tensor<T>) -> Result<LstmCache<T>> {
        let s = x.shape();
        let (inp, hid) = (self.input_dim(), self.hidden_size());
        if s.len() != 3 || s[2] != inp {
            return Err(shape_err!("lstm expects [batch][len][{inp}], got {:?}", s));
        }
        let (batch, len) = (s[0], s[1]);
        let xt = swap_outer(x.data(), batch, len, inp);
        let g4 = 4 * hid;
        let step_g = batch * g4;
        let step_h = batch * hid;
        let mut gates = vec![T::zero(); batch * len * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(self.b.value.data());
        }
        T::gemm(
            batch * len,
            inp,
            g4,
            T::one(),
            &xt,
            inp as isize,
            1,
            self.w_ih.value.data(),
            1,
            inp as isize,
            T::one(),
            &mut gates,
            g4 as isize,
            1,
        );
        let mut cells = vec![T::zero(); batch * len * hid];
        let mut cells_tanh = vec![T::zero(); batch * len * hid];
        let mut hidden = vec![T::zero(); batch * len * hid];
        for t in 0..len {
            if t > 0 {
                T::gemm(
                    batch,
                    hid,
                    g4,
                    T::one(),
                    &hidden[(t - 1) * step_h..t * step_h],
                    hid as isize,
                    1,
                    self.w_hh.value.data(),
                    1,
                    hid as isize,
                    T::one(),
                    &mut gates[t * step_g..(t + 1) * step_g],
                    g4 as isize,
                    1,
                );
            }
            for b in 0..batch {
                let gi = t * step_g + b * g4;
                let hi = t * step_h + b * hid;
                let g = &mut gates[gi..gi + g4];
                for v in &mut g[..2 * hid] {
                    *v = sigmoid(*v);
                }
                for v in &mut g[2 * hid..3 * hid] {
                    *v = tanh(*v);
                }
                for v in &mut g[3 * hid..] {
                    *v = sigmoid(*v);
                }
                for j in 0..hid {
                    let c_prev = if t > 0 { cells[hi - step_h + j] } else { T::zero() };
                    let c = g[hid + j] * c_prev + g[j] * g[2 * hid + j];
                    let tc = tanh(c);
                    cells[hi + j] = c;
                    cells_tanh[hi + j] = tc;
                    hidden[hi + j] = g[3 * hid + j] * tc;
                }
            }
        }
        Ok(LstmCache {
            x: xt,
            batch,
            len,
            gates,
            cells,
            cells_tanh,
            hidden,
        })
    }

    fn output(&self, c: &LstmCache<T>) -> Result<Tensor<T>> {
        let hid = self.hidden_size();
        Tensor::from_vec(&[c.batch, c.len, hid], swap_outer(&c.hidden, c.len, c.batch, hid))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.run(x)?;
        self.output(&c)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.run(x)?;
        let y = self.output(&c)?;
        self.cache = Some(c);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(no_cache)?;
        let (inp, hid) = (self.input_dim(), self.hidden_size());
        let (batch, len) = (cache.batch, cache.len);
        dy.expect_shape(&[batch, len, hid], "lstm backward")?;
        let dyt = swap_outer(dy.data(), batch, len, hid);
        let g4 = 4 * hid;
        let step_g = batch * g4;
        let step_h = batch * hid;
        let one = T::one();
        let mut dpre = vec![T::zero(); batch * len * g4];
        let mut dh_next = vec![T::zero(); step_h];
        let mut dc_next = vec![T::zero(); step_h];
        for t in (0..len).rev() {
            for b in 0..batch {
                let gi = t * step_g + b * g4;
                let hi = t * step_h + b * hid;
                let g = &cache.gates[gi..gi + g4];
                let d = &mut dpre[gi..gi + g4];
                for j in 0..hid {
                    let (i, f, gg, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                    let tc = cache.cells_tanh[hi + j];
                    let dh = dyt[hi + j] + dh_next[b * hid + j];
                    let d_o = dh * tc;
                    let dc = dc_next[b * hid + j] + dh * o * (one - tc * tc);
                    let c_prev = if t > 0 {
                        cache.cells[hi - step_h + j]
                    } else {
                        T::zero()
                    };
                    d[j] = dc * gg * i * (one - i);
                    d[hid + j] = dc * c_prev * f * (one - f);
                    d[2 * hid + j] = dc * i * (one - gg * gg);
                    d[3 * hid + j] = d_o * o * (one - o);
                    dc_next[b * hid + j] = dc * f;
                }
            }
            let dpre_t = &dpre[t * step_g..(t + 1) * step_g];
            T::gemm(
                batch,
                g4,
                hid,
                one,
                dpre_t,
                g4 as isize,
                1,
                self.w_hh.value.data(),
                hid as isize,
                1,
                T::zero(),
                &mut dh_next,
                hid as isize,
                1,
            );
            if t > 0 {
                T::gemm(
                    g4,
                    batch,
                    hid,
                    one,
                    dpre_t,
                    1,
                    g4 as isize,
                    &cache.hidden[(t - 1) * step_h..t * step_h],
                    hid as isize,
                    1,
                    one,
                    self.w_hh.grad.data_mut(),
                    hid as isize,
                    1,
                );
            }
        }
        let rows = batch * len;
        T::gemm(
            g4,
            rows,
            inp,
            one,
            &dpre,
            1,
            g4 as isize,
            &cache.x,
            inp as isize,
            1,
            one,
            self.w_ih.grad.data_mut(),
            inp as isize,
            1,
        );
        add_col_sums(&dpre, g4, self.b.grad.data_mut());
        let mut dxt = vec![T::zero(); rows * inp];
        T::gemm(
            rows,
            g4,
            inp,
            one,
            &dpre,
            g4 as isize,
            1,
            self.w_ih.value.data(),
            inp as isize,
            1,
            T::zero(),
            &mut dxt,
            inp as isize,
            1,
        );
        Tensor::from_vec(&[batch, len, inp], swap_outer(&dxt, len, batch, inp))
    }
}

/// Reverses the middle (time) axis of `[batch][len][f]`.
fn reverse_time<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (len, f) = (s[1], s[2]);
    let mut out = Vec::with_capacity(x.len());
    for seq in x.data().chunks_exact(len * f) {
        for t in (0..len).rev() {
            out.extend_from_slice(&seq[t * f..(t + 1) * f]);
        }
    }
    Tensor::from_vec(s, out).expect("same element count")
}

/// Two LSTMs over the same sequence, one per direction; outputs are
/// concatenated as `[forward | backward]` on the feature axis.
#[derive(Debug, Clone)]
pub struct BiLstm<T: Real> {
    pub fwd: Lstm<T>,
    pub bwd: Lstm<T>,
}

impl<T: Real> BiLstm<T> {
    /// `hidden` per direction; the output width is `2 * hidden`.
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm { fwd: Lstm::new(input, hidden, rng), bwd: Lstm::new(input, hidden, rng) }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden_size() + self.bwd.hidden_size()
    }

    fn join(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let (s, ha, hb) = (a.shape(), a.last_dim(), b.last_dim());
        let mut out = Vec::with_capacity(a.len() + b.len());
        for (ra, rb) in a.data().chunks_exact(ha).zip(b.data().chunks_exact(hb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        Tensor::from_vec(&[s[0], s[1], ha + hb], out)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.fwd.infer(x)?;
        let b = reverse_time(&self.bwd.infer(&reverse_time(x))?);
        Self::join(&f, &b)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.fwd.forward(x)?;
        let b = reverse_time(&self.bwd.forward(&reverse_time(x))?);
        Self::join(&f, &b)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (hf, hb) = (self.fwd.hidden_size(), self.bwd.hidden_size());
        let s = dy.shape();
        if s.len() != 3 || s[2] != hf + hb {
            return Err(shape_err!("bilstm backward expects [batch][len][{}], got {:?}", hf + hb, s));
        }
        let mut df = Vec::with_capacity(s[0] * s[1] * hf);
        let mut db = Vec::with_capacity(s[0] * s[1] * hb);
        for row in dy.data().chunks_exact(hf + hb) {
            df.extend_from_slice(&row[..hf]);
            db.extend_from_slice(&row[hf..]);
        }
        let dxf = self.fwd.backward(&Tensor::from_vec(&[s[0], s[1], hf], df)?)?;
        let dxb = reverse_time(&self.bwd.backward(&reverse_time(&Tensor::from_vec(&[s[0], s[1], hb], db)?))?);
        let mut dx = dxf;
        dx.add_assign(&dxb)?;
        Ok(dx)
    }
}

/// Elementwise `max(x, 0)`.
#[derive(Debug, Clone, Default)]
pub struct Relu<T: Real> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| v.max(T::zero())))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.cache = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(no_cache)?;
        dy.same_shape(&x, "relu backward")?;
        let data = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
            .collect();
        Tensor::from_vec(x.shape(), data)
    }
}

/// Any of the supported layers.
#[derive(Debug, Clone)]
pub enum Layer<T: Real> {
    Dense(Dense<T>),
    Conv1d(Conv1d<T>),
    Lstm(Lstm<T>),
    BiLstm(BiLstm<T>),
    Relu(Relu<T>),
}

impl<T: Real> Layer<T> {
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::Conv1d(l) => l.infer(x),
            Layer::Lstm(l) => l.infer(x),
            Layer::BiLstm(l) => l.infer(x),
            Layer::Relu(l) => l.infer(x),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv1d(l) => l.forward(x),
            Layer::Lstm(l) => l.forward(x),
            Layer::BiLstm(l) => l.forward(x),
            Layer::Relu(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.backward(dy),
            Layer::Conv1d(l) => l.backward(dy),
            Layer::Lstm(l) => l.backward(dy),
            Layer::BiLstm(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv1d(_) => "conv1d",
            Layer::Lstm(_) => "lstm",
            Layer::BiLstm(_) => "bilstm",
            Layer::Relu(_) => "relu",
        }
    }

    /// Parameters with their local names (`w`, `b`, `w_ih`, ...).
    pub fn named_params(&self) -> Vec<(&'static str, &Param<T>)> {
        match self {
            Layer::Dense(l) => vec![("w", &l.w), ("b", &l.b)],
            Layer::Conv1d(l) => vec![("w", &l.w), ("b", &l.b)],
            Layer::Lstm(l) => vec![("w_ih", &l.w_ih), ("w_hh", &l.w_hh), ("b", &l.b)],
            Layer::BiLstm(l) => vec![
                ("fwd.w_ih", &l.fwd.w_ih),
                ("fwd.w_hh", &l.fwd.w_hh),
                ("fwd.b", &l.fwd.b),
                ("bwd.w_ih", &l.bwd.w_ih),
                ("bwd.w_hh", &l.bwd.w_hh),
                ("bwd.b", &l.bwd.b),
            ],
            Layer::Relu(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Dense(l) => vec![&mut l.w, &mut l.b],
            Layer::Conv1d(l) => vec![&mut l.w, &mut l.b],
            Layer::Lstm(l) => vec![&mut l.w_ih, &mut l.w_hh, &mut l.b],
            Layer::BiLstm(l) => vec![
                &mut l.fwd.w_ih,
                &mut l.fwd.w_hh,
                &mut l.fwd.b,
                &mut l.bwd.w_ih,
                &mut l.bwd.w_hh,
                &mut l.bwd.b,
            ],
            Layer::Relu(_) => vec![],
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T: Real> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Sequential { layers }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        for l in &self.layers {
            y = l.infer(&y)?;
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        for l in &mut self.layers {
            y = l.forward(&y)?;
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mut d = dy.clone();
        for l in self.layers.iter_mut().rev() {
            d = l.backward(&d)?;
        }
        Ok(d)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.named_params()
                    .into_iter()
                    .map(move |(n, p)| (format!("{prefix}.{i}.{n}"), p))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, GradCheck, Model};
    use crate::seed::{rng_for, Stream};

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = rng_for(seed, Stream::Data, 0);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let d = Dense::from_params(w, Tensor::zeros(&[3])).unwrap();
        let x = rand_tensor(&[2, 5, 3], 1);
        assert_eq!(d.infer(&x).unwrap(), x);
        assert!(d.infer(&rand_tensor(&[2, 4], 1)).is_err());
    }

    #[test]
    fn conv_same_kernel_one_zero_shifts_right() {
        let w = Tensor::from_vec(&[1, 1, 2], vec![1.0, 0.0]).unwrap();
        let c = Conv1d::from_params(w, Tensor::zeros(&[1]), Padding::Same).unwrap();
        let x = Tensor::from_vec(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.infer(&x).unwrap().data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_output_lengths() {
        let mut rng = rng_for(3, Stream::Init, 0);
        let x = rand_tensor(&[2, 9, 3], 2);
        let same = Conv1d::<f64>::new(3, 4, Padding::Same, &mut rng);
        let valid = Conv1d::<f64>::new(3, 4, Padding::Valid, &mut rng);
        assert_eq!(same.infer(&x).unwrap().shape(), &[2, 9, 4]);
        assert_eq!(valid.infer(&x).unwrap().shape(), &[2, 8, 4]);
    }

    #[test]
    fn lstm_with_zero_parameters_outputs_zero() {
        let h = 5;
        let l = Lstm::from_params(
            Tensor::<f64>::zeros(&[4 * h, 3]),
            Tensor::zeros(&[4 * h, h]),
            Tensor::zeros(&[4 * h]),
        )
        .unwrap();
        let y = l.infer(&rand_tensor(&[2, 7, 3], 4)).unwrap();
        assert_eq!(y.shape(), &[2, 7, h]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let mut rng = rng_for(0, Stream::Init, 0);
        let mut d = Dense::<f64>::new(2, 2, &mut rng);
        assert!(matches!(d.backward(&Tensor::zeros(&[1, 2])), Err(Error::State(_))));
        let mut l = Lstm::<f64>::new(2, 2, &mut rng);
        assert!(matches!(l.backward(&Tensor::zeros(&[1, 1, 2])), Err(Error::State(_))));
    }

    #[test]
    fn dense_bias_gradient_closed_form() {
        let mut rng = rng_for(5, Stream::Init, 0);
        let mut d = Dense::<f64>::new(3, 2, &mut rng);
        let x = rand_tensor(&[4, 3], 6);
        let y = d.forward(&x).unwrap();
        let (_, g) = mse_loss(&y, &Tensor::zeros(y.shape())).unwrap();
        d.backward(&g).unwrap();
        let n = y.len() as f64;
        for j in 0..2 {
            let expect: f64 = (0..4).map(|r| 2.0 * y.data()[r * 2 + j] / n).sum();
            assert!((d.b.grad.data()[j] - expect).abs() < 1e-14);
        }
    }

    fn check(mut net: Sequential<f64>, x: Tensor<f64>, target: Tensor<f64>) {
        let report = GradCheck::default()
            .run(&mut net, |m: &mut Sequential<f64>, backprop| {
                let y = m.forward(&x)?;
                let (l, g) = mse_loss(&y, &target)?;
                if backprop {
                    m.backward(&g)?;
                }
                Ok(l)
            })
            .unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_for(11, Stream::Init, 0);
        // Every layer type behind another trainable layer, so input
        // gradients are exercised too.
        let dense = Sequential::new(vec![
            Layer::Dense(Dense::new(3, 4, &mut rng)),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::new(4, 2, &mut rng)),
        ]);
        check(dense, rand_tensor(&[5, 3], 1), rand_tensor(&[5, 2], 2));

        for padding in [Padding::Same, Padding::Valid] {
            let conv = Sequential::new(vec![
                Layer::Conv1d(Conv1d::new(2, 3, padding, &mut rng)),
                Layer::Relu(Relu::new()),
                Layer::Conv1d(Conv1d::new(3, 2, padding, &mut rng)),
            ]);
            let out_len = if padding == Padding::Same { 6 } else { 4 };
            check(conv, rand_tensor(&[2, 6, 2], 3), rand_tensor(&[2, out_len, 2], 4));
        }

        let lstm = Sequential::new(vec![
            Layer::Dense(Dense::new(2, 3, &mut rng)),
            Layer::Lstm(Lstm::new(3, 4, &mut rng)),
            Layer::Lstm(Lstm::new(4, 2, &mut rng)),
        ]);
        check(lstm, rand_tensor(&[3, 5, 2], 5), rand_tensor(&[3, 5, 2], 6));

        let bilstm = Sequential::new(vec![
            Layer::Dense(Dense::new(2, 3, &mut rng)),
            Layer::BiLstm(BiLstm::new(3, 2, &mut rng)),
        ]);
        check(bilstm, rand_tensor(&[2, 4, 2], 7), rand_tensor(&[2, 4, 4], 8));
    }

    #[test]
    fn bilstm_backward_half_reads_the_reversed_sequence() {
        let mut rng = rng_for(13, Stream::Init, 0);
        let bi = BiLstm::<f64>::new(2, 3, &mut rng);
        let x = rand_tensor(&[2, 5, 2], 9);
        let y = bi.infer(&x).unwrap();
        assert_eq!(y.shape(), &[2, 5, 6]);
        let f = bi.fwd.infer(&x).unwrap();
        let b = reverse_time(&bi.bwd.infer(&reverse_time(&x)).unwrap());
        for (i, row) in y.data().chunks_exact(6).enumerate() {
            assert_eq!(&row[..3], &f.data()[i * 3..i * 3 + 3]);
            assert_eq!(&row[3..], &b.data()[i * 3..i * 3 + 3]);
        }
        // At the first step the forward half has seen only the first input
        // and the backward half the whole sequence.
        let mut x2 = x.clone();
        x2.data_mut()[9] += 1.0;
        let y2 = bi.infer(&x2).unwrap();
        assert_eq!(&y2.data()[..3], &y.data()[..3]);
        assert_ne!(&y2.data()[3..6], &y.data()[3..6]);
    }

    #[test]
    fn corrupted_gradient_fails_the_check() {
        let mut rng = rng_for(12, Stream::Init, 0);
        let mut net = Sequential::new(vec![Layer::Dense(Dense::<f64>::new(3, 2, &mut rng))]);
        let x = rand_tensor(&[4, 3], 7);
        let t = rand_tensor(&[4, 2], 8);
        let report = GradCheck::default()
            .run_tampered(
                &mut net,
                |m: &mut Sequential<f64>, backprop| {
                    let y = m.forward(&x)?;
                    let (l, g) = mse_loss(&y, &t)?;
                    if backprop {
                        m.backward(&g)?;
                    }
                    Ok(l)
                },
                |grads| grads[0][1] *= 1.5,
            )
            .unwrap();
        assert!(!report.pass);
        assert_eq!(report.worst.0, "seq.0.w");
        assert_eq!(net.num_params(), 8);
    }

    #[test]
    fn f32_and_f64_agree_on_forward() {
        let mut rng = rng_for(13, Stream::Init, 0);
        let net = Sequential::new(vec![
            Layer::Conv1d(Conv1d::<f64>::new(2, 4, Padding::Same, &mut rng)),
            Layer::Lstm(Lstm::new(4, 3, &mut rng)),
        ]);
        let net32 = Sequential::new(
            net.layers
                .iter()
                .map(|l| match l {
                    Layer::Conv1d(c) => Layer::Conv1d(
                        Conv1d::from_params(c.w.value.cast(), c.b.value.cast(), c.padding).unwrap(),
                    ),
                    Layer::Lstm(c) => Layer::Lstm(
                        Lstm::from_params(c.w_ih.value.cast(), c.w_hh.value.cast(), c.b.value.cast()).unwrap(),
                    ),
                    _ => unreachable!(),
                })
                .collect(),
        );
        let x = rand_tensor(&[2, 8, 2], 9);
        let a = net.infer(&x).unwrap();
        let b = net32.infer(&x.cast::<f32>()).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - *q as f64).abs() < 1e-5);
        }
    }
}
