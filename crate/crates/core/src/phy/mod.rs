//! Link-level physical-layer simulation: channels, pilots, interference and
//! estimate datasets.

pub mod channel;
pub mod dataset;
pub mod interference;
pub mod io;
pub mod pilot;
pub mod scenario;
pub mod signal;

pub use channel::{cn, gen_channel, tap_powers, CArray3, ChannelRealization};
pub use dataset::{make_dataset, Deployment, EstimatePair};
pub use interference::{draw_interference, interferer_powers, InterferenceSet, InterferenceSource, Link};
pub use io::{read_dataset, write_dataset, DatasetHeader};
pub use pilot::PilotGrid;
pub use scenario::{fnv1a64, CellScenario};
pub use signal::{mean_power, nmse, synth_received_pilot, zf_estimate};
