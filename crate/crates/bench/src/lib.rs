//! Experiment runner for the `intmit` simulator.
//!
//! [`run`] executes one subcommand against an [`ExperimentConfig`] and writes
//! its artifacts to the configured output directory. The `intmit` binary is
//! a thin command-line front end over this library.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod gradcheck;
pub mod timing;

pub use commands::{run, Arch, BlerRow, Command, Outcome, UlEvalRow};
pub use config::ExperimentConfig;
pub use error::{BenchError, BenchResult};

/// Sizes the global worker pool from `INTMIT_THREADS` when it is set.
pub fn init_threads() -> BenchResult<()> {
    if let Ok(v) = std::env::var(config::ENV_THREADS) {
        let n: usize = v
            .parse()
            .map_err(|_| BenchError::Config(format!("{}: expected a thread count, found {v:?}", config::ENV_THREADS)))?;
        // Fails only if the pool was already built, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
