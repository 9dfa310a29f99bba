//! One-layer relation model over compressed and attached real nodes.

mod model;
mod train;
mod view;


pub use model::{default_width, gnn_forward, gnn_predict, Conv, ConvKind, GnnModel, GAT_SLOPE};
pub use train::{
    compressed_loss_and_gradients, compressed_objective, correlation_loss_and_gradients, finetune_correlation,
    finetune_forward,
    train_on_compressed, view_loss_and_gradients, FinetuneConfig, FinetuneReport, GnnTrainConfig, GnnTrainReport,
    HeldOut,
};
pub use view::{compressed_degrees, MessagePassingView};
