use crate::error::{Error, Result};

/// Outcome of one decoded block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOutcome {
    pub decoded: Vec<u8>,
    pub truth: Vec<u8>,
    pub converged: bool,
}

impl BlockOutcome {
    /// Any information-bit error or a decoder failure.
    pub fn is_error(&self) -> bool {
        !self.converged || self.decoded != self.truth
    }
}

/// Fraction of erroneous blocks.
pub fn bler(frames: &[BlockOutcome]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Empty("no frames".into()));
    }
    Ok(frames.iter().filter(|f| f.is_error()).count() as f64 / frames.len() as f64)
}

/// Binomial standard error of a BLER estimate, floored at one error so that
/// zero-error points still carry a tolerance.
pub fn bler_std(p: f64, n: usize) -> f64 {
    let n = n.max(1) as f64;
    (p.max(1.0 / n) * (1.0 - p).max(1.0 / n) / n).sqrt()
}
