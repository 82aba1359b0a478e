//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::scalar::Real;

use rand::Rng;

use crate::seed::{rng_for, Stream};

use super::model::Model;

/// Replaces every bias (parameters named `*.b`) with draws from
/// `U(-scale, scale)`.
///
/// Freshly initialised networks have zero biases, so a unit whose inputs
/// are all zero sits exactly on a ReLU kink where central differences
/// disagree with any one-sided derivative. Checking at a random point
/// avoids that measure-zero case.
pub fn randomize_biases<T: Real, M: Model<T>>(model: &mut M, seed: u64, scale: f64) {
    let names: Vec<bool> = model.named_params().into_iter().map(|(n, _)| n.ends_with(".b")).collect();
    let mut rng = rng_for(seed, Stream::Init, 99);
    for (p, is_bias) in model.params_mut().into_iter().zip(names) {
        if is_bias {
            for v in p.value.data_mut() {
                *v = T::lit(rng.gen_range(-scale..scale));
            }
        }
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Name and flat index of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares analytic parameter gradients against central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error of near-zero gradients.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

impl GradCheck {
    /// `eval(model, backprop)` must run a forward pass and return the scalar
    /// loss; with `backprop = true` it must also accumulate gradients.
    pub fn run<T, M, F>(&self, model: &mut M, eval: F) -> Result<GradCheckReport>
    where
        T: Real,
        M: Model<T>,
        F: FnMut(&mut M, bool) -> Result<T>,
    {
        self.run_tampered(model, eval, |_| {})
    }

    /// Like [`GradCheck::run`], but lets `tamper` edit the analytic gradients
    /// before comparison (negative controls).
    pub fn run_tampered<T, M, F, G>(&self, model: &mut M, mut eval: F, tamper: G) -> Result<GradCheckReport>
    where
        T: Real,
        M: Model<T>,
        F: FnMut(&mut M, bool) -> Result<T>,
        G: FnOnce(&mut [Vec<T>]),
    {
        model.zero_grad();
        eval(model, true)?;
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        let mut analytic: Vec<Vec<T>> = model
            .named_params()
            .into_iter()
            .map(|(_, p)| p.grad.data().to_vec())
            .collect();
        tamper(&mut analytic);

        let eps = T::lit(self.eps);
        let mut worst = (String::new(), 0usize);
        let mut max_rel = 0.0f64;
        let mut checked = 0;
        for (pi, name) in names.iter().enumerate() {
            let len = analytic[pi].len();
            for idx in 0..len {
                let orig = model.params_mut()[pi].value.data()[idx];
                model.params_mut()[pi].value.data_mut()[idx] = orig + eps;
                let up = eval(model, false)?;
                model.params_mut()[pi].value.data_mut()[idx] = orig - eps;
                let down = eval(model, false)?;
                model.params_mut()[pi].value.data_mut()[idx] = orig;
                let numeric = ((up - down) / (eps + eps)).as_f64();
                let a = analytic[pi][idx].as_f64();
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(self.floor);
                if rel > max_rel || !rel.is_finite() {
                    max_rel = if rel.is_finite() { rel } else { f64::INFINITY };
                    worst = (name.clone(), idx);
                }
                checked += 1;
            }
        }
        Ok(GradCheckReport {
            max_rel_err: max_rel,
            worst,
            checked,
            tolerance: self.tolerance,
            pass: max_rel < self.tolerance,
        })
    }
}
