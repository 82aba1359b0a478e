//! Minimal deterministic neural-network engine.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod model;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{
    load_into, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{randomize_biases, GradCheck, GradCheckReport};
pub use layers::{BiLstm, Conv1d, Dense, Layer, Lstm, Padding, Param, Relu, Sequential};
pub use loss::{cross_entropy_loss, log_softmax_rows, mse_loss};
pub use model::Model;
pub use tensor::Tensor;
