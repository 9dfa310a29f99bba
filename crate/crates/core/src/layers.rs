//! Affine layers and supervised losses built on the tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::task::TaskKind;
use crate::tensor::{Matrix, Tape, Var};

/// `x · weight + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::glorot(inputs, outputs, rng),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundDense {
        BoundDense {
            weight: leaf(tape, &self.weight, trainable),
            bias: leaf(tape, &self.bias, trainable),
        }
    }
}

impl BoundDense {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.weight)?;
        tape.add_row(y, self.bias)
    }
}

pub(crate) fn leaf(tape: &mut Tape, m: &Matrix, trainable: bool) -> Var {
    if trainable {
        tape.param(m.clone())
    } else {
        tape.constant(m.clone())
    }
}

/// Which objective a training run minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquared,
}

impl LossKind {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => LossKind::CrossEntropy,
            TaskKind::Regression => LossKind::MeanSquared,
        }
    }

    pub fn apply(self, tape: &mut Tape, pred: Var, target: &Matrix) -> Result<Var> {
        match self {
            LossKind::CrossEntropy => tape.cross_entropy(pred, target),
            LossKind::MeanSquared => tape.mean_squared(pred, target),
        }
    }
}

/// Softmax for classification, identity for regression.
pub(crate) fn output_activation(tape: &mut Tape, task: TaskKind, logits: Var) -> Var {
    match task {
        TaskKind::Classification => tape.row_softmax(logits),
        TaskKind::Regression => logits,
    }
}
