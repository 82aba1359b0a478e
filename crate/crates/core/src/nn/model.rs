use crate::scalar::Real;

use super::layers::{Param, Sequential};

/// A collection of named trainable parameters.
pub trait Model<T: Real> {
    fn named_params(&self) -> Vec<(String, &Param<T>)>;

    /// Mutable parameters, in the same order as [`Model::named_params`].
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }
}

impl<T: Real> Model<T> for Sequential<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        Sequential::named_params(self, "seq")
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Sequential::params_mut(self)
    }
}
