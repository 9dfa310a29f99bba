//! Field encoding, recurrent sequence encoding and embedding I/O.

mod dataset;
mod embeddings;
mod model;
mod schema;
mod train;

pub use dataset::{read_records, Event, FieldValue, SequenceDataset, SequenceRecord};
pub use embeddings::EmbeddingSet;
pub use model::{EncoderModel, LstmCell};
pub use schema::{FieldKind, FieldSchema, FieldSpec};
pub use train::{sequence_loss_and_gradients, train_encoder, EncoderTrainConfig, EncoderTrainReport};
