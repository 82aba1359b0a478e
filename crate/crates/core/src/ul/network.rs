//! The modular uplink denoiser and the conv-only baseline.

use rand::Rng;

use crate::error::Result;
use crate::nn::{BiLstm, Conv1d, Dense, Layer, Model, Padding, Param, Relu, Sequential, Tensor};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

/// Layer width scaled by the scaling factor, at least 1.
pub fn scaled(width: usize, sf: f64) -> usize {
    ((width as f64 * sf).round() as usize).max(1)
}

fn conv_stack<T: Real, R: Rng>(widths: &[usize], rng: &mut R) -> Vec<Layer<T>> {
    widths
        .windows(2)
        .flat_map(|w| [Layer::Conv1d(Conv1d::new(w[0], w[1], Padding::Same, rng)), Layer::Relu(Relu::new())])
        .collect()
}

/// A network mapping `[rows][k][2]` to `[rows][k][2]`, one row per antenna
/// pair. Rows never interact.
pub trait RowDenoiser<T: Real>: Model<T> + Clone + Send + Sync {
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;
    /// Short label for logs and checkpoints.
    fn kind(&self) -> &'static str;
}

/// Conv feature extractor, bidirectional LSTM over the resource-element axis,
/// and a per-RE dense head back to (re, im).
#[derive(Debug, Clone)]
pub struct UlNetwork<T: Real> {
    pub extractor: Sequential<T>,
    pub refiner: Sequential<T>,
    pub recovery: Sequential<T>,
    pub scale_factor: f64,
}

impl<T: Real> UlNetwork<T> {
    /// Default widths: conv 2→16→32→32, bidirectional LSTM 2×32, dense
    /// 64→32→2, each hidden width multiplied by `scale_factor`.
    pub fn new(scale_factor: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Init, 0);
        let c = [2, scaled(16, scale_factor), scaled(32, scale_factor), scaled(32, scale_factor)];
        let hid = 2 * scaled(32, scale_factor);
        let head = scaled(32, scale_factor);
        UlNetwork {
            extractor: Sequential::new(conv_stack(&c, &mut rng)),
            refiner: Sequential::new(vec![Layer::BiLstm(BiLstm::new(c[3], hid / 2, &mut rng))]),
            recovery: Sequential::new(vec![
                Layer::Dense(Dense::new(hid, head, &mut rng)),
                Layer::Relu(Relu::new()),
                Layer::Dense(Dense::new(head, 2, &mut rng)),
            ]),
            scale_factor,
        }
    }
}

impl<T: Real> Model<T> for UlNetwork<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut v = self.extractor.named_params("extractor");
        v.extend(self.refiner.named_params("refiner"));
        v.extend(self.recovery.named_params("recovery"));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.extractor.params_mut();
        v.extend(self.refiner.params_mut());
        v.extend(self.recovery.params_mut());
        v
    }
}

impl<T: Real> RowDenoiser<T> for UlNetwork<T> {
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.recovery.infer(&self.refiner.infer(&self.extractor.infer(x)?)?)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let f = self.extractor.forward(x)?;
        let r = self.refiner.forward(&f)?;
        self.recovery.forward(&r)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.recovery.backward(dy)?;
        let d = self.refiner.backward(&d)?;
        self.extractor.backward(&d)
    }

    fn kind(&self) -> &'static str {
        "modular"
    }
}

/// Six causal width-2 convolutions (16, 32, 64, 128, 256, 512 channels,
/// scaled) with a linear per-RE projection to (re, im).
#[derive(Debug, Clone)]
pub struct MonolithicNet<T: Real> {
    pub body: Sequential<T>,
    pub scale_factor: f64,
}

impl<T: Real> MonolithicNet<T> {
    pub const WIDTHS: [usize; 6] = [16, 32, 64, 128, 256, 512];

    pub fn new(scale_factor: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Init, 1);
        let mut c = vec![2];
        c.extend(Self::WIDTHS.iter().map(|&w| scaled(w, scale_factor)));
        let mut layers = conv_stack(&c, &mut rng);
        layers.push(Layer::Dense(Dense::new(*c.last().unwrap(), 2, &mut rng)));
        MonolithicNet { body: Sequential::new(layers), scale_factor }
    }
}

impl<T: Real> Model<T> for MonolithicNet<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        self.body.named_params("body")
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.body.params_mut()
    }
}

impl<T: Real> RowDenoiser<T> for MonolithicNet<T> {
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.body.infer(x)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.body.forward(x)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        self.body.backward(dy)
    }

    fn kind(&self) -> &'static str {
        "monolithic"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, randomize_biases, GradCheck};

    fn input(rows: usize, k: usize) -> Tensor<f64> {
        let mut rng = rng_for(3, Stream::Data, 0);
        Tensor::from_fn(&[rows, k, 2], |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn widths_follow_the_scaling_factor() {
        let full = UlNetwork::<f64>::new(1.0, 1);
        let quarter = UlNetwork::<f64>::new(0.25, 1);
        assert!(quarter.num_params() * 8 < full.num_params());
        let mono = MonolithicNet::<f64>::new(0.25, 1);
        assert_eq!(mono.body.layers.len(), 13);
    }

    #[test]
    fn untrained_output_is_finite_and_shaped() {
        let x = input(16, 64);
        for y in [UlNetwork::new(1.0, 2).infer(&x).unwrap(), MonolithicNet::new(0.25, 2).infer(&x).unwrap()] {
            assert_eq!(y.shape(), x.shape());
            assert!(y.all_finite());
        }
    }

    #[test]
    fn zero_input_gives_a_bias_determined_constant_per_position() {
        let net = UlNetwork::<f64>::new(0.5, 4);
        let y = net.infer(&Tensor::zeros(&[3, 10, 2])).unwrap();
        let row = &y.data()[..20];
        for r in 1..3 {
            assert_eq!(&y.data()[r * 20..(r + 1) * 20], row);
        }
    }

    #[test]
    fn rows_are_permutation_equivariant() {
        let net = UlNetwork::<f64>::new(0.5, 5);
        let x = input(6, 12);
        let perm = [4, 0, 5, 2, 1, 3];
        let xp = Tensor::concat_outer(&perm.iter().map(|&r| x.slice_outer(r, 1).unwrap()).collect::<Vec<_>>()).unwrap();
        let (y, yp) = (net.infer(&x).unwrap(), net.infer(&xp).unwrap());
        for (i, &r) in perm.iter().enumerate() {
            assert_eq!(yp.slice_outer(i, 1).unwrap().data(), y.slice_outer(r, 1).unwrap().data());
        }
    }

    #[test]
    fn small_networks_pass_grad_check() {
        let x = input(2, 5);
        let target = input(2, 5).map(|v| v * 0.5);
        let mut ul = UlNetwork::<f64>::new(0.25, 6);
        randomize_biases(&mut ul, 1, 0.1);
        let report = GradCheck::default()
            .run(&mut ul, |n, bp| {
                let y = if bp { n.forward(&x)? } else { n.infer(&x)? };
                let (l, d) = mse_loss(&y, &target)?;
                if bp {
                    n.backward(&d)?;
                }
                Ok(l)
            })
            .unwrap();
        assert!(report.pass, "{report:?}");
        let mut mono = MonolithicNet::<f64>::new(0.125, 6);
        randomize_biases(&mut mono, 2, 0.1);
        let report = GradCheck::default()
            .run(&mut mono, |n, bp| {
                let y = if bp { n.forward(&x)? } else { n.infer(&x)? };
                let (l, d) = mse_loss(&y, &target)?;
                if bp {
                    n.backward(&d)?;
                }
                Ok(l)
            })
            .unwrap();
        assert!(report.pass, "{report:?}");
    }
}
