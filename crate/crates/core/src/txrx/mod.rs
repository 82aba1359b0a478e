//! Coded QAM transmit/receive chain and classical combiners.

pub mod bler;
pub mod combine;
pub mod interleaver;
pub mod ldpc;
pub mod qam;

pub use bler::{bler, bler_std, BlockOutcome};
pub use combine::{irc_combine, irc_weights, mrc_combine, post_combining_variance};
pub use interleaver::Interleaver;
pub use ldpc::{DecodeResult, LdpcCode};
pub use qam::{bits_to_labels, maxlog_llrs, qam_hard, qam_modulate, qam_soft_demod, qam_soft_demod_var, QamOrder};

/// Default decoder iteration budget.
pub const MAX_BP_ITERS: usize = 25;

/// Encoder, interleaver and mapper for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct TxChain {
    pub code: LdpcCode,
    pub interleaver: Interleaver,
    pub order: QamOrder,
}

impl TxChain {
    pub fn new(code: LdpcCode, interleaver: Interleaver, order: QamOrder) -> crate::Result<Self> {
        if interleaver.len() != code.n_code || code.n_code % order.bits_per_symbol() != 0 {
            return Err(crate::Error::Config(format!(
                "code length {} does not fit interleaver {} / {:?}",
                code.n_code,
                interleaver.len(),
                order
            )));
        }
        Ok(TxChain { code, interleaver, order })
    }

    pub fn symbols_per_block(&self) -> usize {
        self.code.n_code / self.order.bits_per_symbol()
    }

    /// Codeword, interleaved bits and transmitted symbols.
    pub fn transmit<T: crate::Real>(
        &self,
        info: &[u8],
    ) -> crate::Result<(Vec<u8>, Vec<u8>, Vec<num_complex::Complex<T>>)> {
        let word = self.code.encode(info)?;
        let inter = self.interleaver.interleave(&word)?;
        let sym = qam_modulate(&inter, self.order)?;
        Ok((word, inter, sym))
    }

    /// Deinterleaves channel-order LLRs and decodes them.
    pub fn receive<T: crate::Real>(&self, llrs: &[T], info: &[u8]) -> crate::Result<BlockOutcome> {
        let llrs = self.interleaver.deinterleave(llrs)?;
        let out = self.code.decode(&llrs, MAX_BP_ITERS)?;
        Ok(BlockOutcome { decoded: self.code.extract_info(&out.bits), truth: info.to_vec(), converged: out.converged })
    }
}
