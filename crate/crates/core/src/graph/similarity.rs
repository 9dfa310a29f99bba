//! Cosine and Pearson similarity over prepared (centered, unit-norm) rows.

use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    Cosine,
    Pearson,
}

impl std::str::FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(SimilarityMetric::Cosine),
            "pearson" => Ok(SimilarityMetric::Pearson),
            other => Err(Error::Config(format!("unknown similarity metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::Pearson => "pearson",
        })
    }
}

/// Rows scaled so that a plain dot product is the similarity. Zero-norm
/// (or zero-variance, for Pearson) rows become all zeros.
pub fn prepare_rows(x: &Matrix, metric: SimilarityMetric) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        prepare_in_place(out.row_mut(r), metric);
    }
    out
}

fn prepare_in_place(row: &mut [f64], metric: SimilarityMetric) {
    if metric == SimilarityMetric::Pearson {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|v| *v /= norm);
    } else {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// All pairwise similarities between prepared rows, clamped to `[-1, 1]`.
pub fn prepared_similarities(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut s = a.matmul_t(b)?;
    s.as_mut_slice().iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    Ok(s)
}

pub fn similarity(x: &[f64], y: &[f64], metric: SimilarityMetric) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(dim("similarity", (1, x.len()), (1, y.len())));
    }
    let a = prepare_rows(&Matrix::from_vec(1, x.len(), x.to_vec())?, metric);
    let b = prepare_rows(&Matrix::from_vec(1, y.len(), y.to_vec())?, metric);
    Ok(prepared_similarities(&a, &b)?.get(0, 0))
}
