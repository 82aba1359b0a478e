//! Interference simulation for a multi-cell MIMO-OFDM link and neural
//! interference mitigation on both link directions.
//!
//! [`phy`] generates channels, pilots and interference, [`txrx`] holds the
//! coded transmit chain and classical combiners, [`nn`] is a small CPU
//! network engine, and [`ul`] and [`dl`] build the mitigation networks on top.

pub mod dl;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod phy;
pub mod scalar;
pub mod seed;
pub mod txrx;
pub mod ul;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double precision aliases, used for training and gradient checks.
pub type Tensor64 = nn::Tensor<f64>;
pub type UlNetwork64 = ul::UlNetwork<f64>;
pub type MonolithicNet64 = ul::MonolithicNet<f64>;
pub type DlNetwork64 = dl::DlNetwork<f64>;

/// Single precision aliases, used for timing.
pub type Tensor32 = nn::Tensor<f32>;
pub type UlNetwork32 = ul::UlNetwork<f32>;
pub type MonolithicNet32 = ul::MonolithicNet<f32>;
pub type DlNetwork32 = dl::DlNetwork<f32>;
