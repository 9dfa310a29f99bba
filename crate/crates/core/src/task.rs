//! Task kinds, labels and predictions shared across the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        })
    }
}

/// A record label: JSON integers are class indices, JSON floats are values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Class(c) => c as f64,
            Label::Value(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Categorical,
    Numerical,
}

pub fn label_kind(labels: &[Label]) -> LabelKind {
    if labels.iter().all(|l| matches!(l, Label::Class(_))) {
        LabelKind::Categorical
    } else {
        LabelKind::Numerical
    }
}

/// Number of model outputs implied by the labels: class count (at least 2)
/// for classification, 1 for regression.
pub fn output_width(task: TaskKind, labels: &[Label]) -> Result<usize> {
    match task {
        TaskKind::Regression => Ok(1),
        TaskKind::Classification => {
            if label_kind(labels) != LabelKind::Categorical {
                return Err(Error::TaskMismatch(
                    "classification needs integer class labels".into(),
                ));
            }
            let max = labels
                .iter()
                .map(|l| match l {
                    Label::Class(c) => *c,
                    Label::Value(_) => 0,
                })
                .max()
                .unwrap_or(0);
            Ok((max + 1).max(2))
        }
    }
}

/// One-hot `N×width` rows for classification, an `N×1` column for regression.
pub fn target_matrix(task: TaskKind, labels: &[Label], width: usize) -> Result<Matrix> {
    match task {
        TaskKind::Classification => {
            let mut m = Matrix::zeros(labels.len(), width);
            for (i, l) in labels.iter().enumerate() {
                match *l {
                    Label::Class(c) if c < width => m.set(i, c, 1.0),
                    Label::Class(c) => return Err(Error::Index { index: c, len: width }),
                    Label::Value(_) => {
                        return Err(Error::TaskMismatch(
                            "classification needs integer class labels".into(),
                        ))
                    }
                }
            }
            Ok(m)
        }
        TaskKind::Regression => {
            Matrix::from_vec(labels.len(), 1, labels.iter().map(|l| l.as_f64()).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Probabilities(Vec<f64>),
    Value(f64),
}

impl Prediction {
    /// Scalar used for ranking: positive-class probability (the last class
    /// for multi-class outputs) or the regression value.
    pub fn score(&self) -> f64 {
        match self {
            Prediction::Probabilities(p) => p.get(1).copied().unwrap_or(p[0]),
            Prediction::Value(v) => *v,
        }
    }

    pub(crate) fn from_row(task: TaskKind, row: &[f64]) -> Prediction {
        match task {
            TaskKind::Classification => Prediction::Probabilities(row.to_vec()),
            TaskKind::Regression => Prediction::Value(row[0]),
        }
    }
}
