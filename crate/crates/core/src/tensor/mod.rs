//! Dense linear algebra, a reverse-mode tape, Adam and gradient checking.

mod gradcheck;
mod matrix;
mod ops;
mod optim;
mod tape;

pub use gradcheck::{finite_diff_check, DEFAULT_STEP};
pub use matrix::Matrix;
pub use ops::{ce_loss, elementwise, mse_loss, row_softmax, Activation, LOG_CLAMP};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
