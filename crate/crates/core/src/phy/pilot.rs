use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::{rng_for, Stream};

/// Known pilot symbols, one per resource element.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotGrid<T: Real> {
    x: Vec<Complex<T>>,
}

impl<T: Real> PilotGrid<T> {
    /// Accepts only unit-modulus symbols (to 1e-6).
    pub fn new(x: Vec<Complex<T>>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Precondition("pilot grid is empty".into()));
        }
        for (i, v) in x.iter().enumerate() {
            let mag = v.norm().as_f64();
            if !((mag - 1.0).abs() <= 1e-6) {
                return Err(Error::Precondition(format!("pilot {i} has modulus {mag}, expected 1")));
            }
        }
        Ok(PilotGrid { x })
    }

    /// Random unit-modulus QPSK pilots.
    pub fn qpsk(k: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Pilot, 0);
        let s = T::FRAC_1_SQRT_2();
        let x = (0..k)
            .map(|_| {
                let re = if rng.gen::<bool>() { s } else { -s };
                let im = if rng.gen::<bool>() { s } else { -s };
                Complex::new(re, im)
            })
            .collect();
        PilotGrid { x }
    }

    pub fn ones(k: usize) -> Self {
        PilotGrid { x: vec![Complex::new(T::one(), T::zero()); k] }
    }

    pub fn symbols(&self) -> &[Complex<T>] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unit_symbols() {
        let bad = vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)];
        assert!(matches!(PilotGrid::<f64>::new(bad), Err(Error::Precondition(_))));
        assert!(PilotGrid::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn qpsk_pilots_are_unit_modulus() {
        let p = PilotGrid::<f64>::qpsk(64, 4);
        assert!(p.symbols().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert!(PilotGrid::new(p.symbols().to_vec()).is_ok());
    }
}
