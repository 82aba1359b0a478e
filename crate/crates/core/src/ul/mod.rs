//! Uplink channel-estimate denoising.

pub mod network;
pub mod preprocess;
pub mod train;

pub use network::{scaled, MonolithicNet, RowDenoiser, UlNetwork};
pub use preprocess::{postprocess, preprocess, stack_rows};
pub use train::{
    denoise, eval_records, evaluate_ul, evaluate_with, frame_nmse, split, train_denoiser, train_monolithic_baseline,
    train_ul, ul_forward, EpochStats, LabelSource, TrainConfig, TrainOutcome, UlFrameEval,
};
