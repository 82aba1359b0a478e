//! Downlink constellation recovery under co-channel interference.

pub mod link;
pub mod network;
pub mod train;

pub use link::{effective_channel, CodedFrame, DlLink, DlSample, Receiver, ReferenceStore, SelectionPolicy};
pub use network::{llrs_from_logits, Classification, DlBatch, DlNetwork, InterferenceFeature};
pub use train::{evaluate_bler, evaluate_bler_with, sinr_at_bler, train_dl, training_samples, BlerPoint, DlEpochStats, DlTrainOutcome};
