use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// Bit permutation applied between the encoder and the modulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Config("interleaver is not a permutation".into()));
            }
        }
        Ok(Interleaver { perm })
    }

    pub fn identity(n: usize) -> Self {
        Interleaver { perm: (0..n).collect() }
    }

    /// Uniformly random permutation of `0..n`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng_for(seed, Stream::Interleaver, 0));
        Interleaver { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `out[i] = x[perm[i]]`.
    pub fn interleave<U: Copy>(&self, x: &[U]) -> Result<Vec<U>> {
        self.check(x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    /// Inverse of [`Interleaver::interleave`]; works on bits or LLRs.
    pub fn deinterleave<U: Copy + Default>(&self, x: &[U]) -> Result<Vec<U>> {
        self.check(x.len())?;
        let mut out = vec![U::default(); x.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::Shape(format!("{len} items for an interleaver of length {}", self.perm.len())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_leaves_bits_alone() {
        let bits = vec![1u8, 0, 0, 1, 1];
        assert_eq!(Interleaver::identity(5).interleave(&bits).unwrap(), bits);
    }

    #[test]
    fn random_permutation_round_trips() {
        let pi = Interleaver::random(128, 4);
        assert_eq!(pi, Interleaver::random(128, 4));
        assert!(Interleaver::new(pi.perm().to_vec()).is_ok());
        let x: Vec<u8> = (0..128).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(pi.deinterleave(&pi.interleave(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Interleaver::new(vec![0, 0, 1]).is_err());
        assert!(Interleaver::new(vec![0, 3]).is_err());
        assert!(Interleaver::identity(4).interleave(&[0u8; 3]).is_err());
    }
}
