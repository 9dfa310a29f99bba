pub mod bench;
pub mod compress;
pub mod demand;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod inference;
pub mod layers;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod task;
pub mod tensor;

pub use error::{Error, Result};
