//! The assignment matrix Φ and the feature/label transport `Φᵀ·`.

use serde::{Deserialize, Serialize};

use super::kmeans::Partition;
use crate::error::{dim, Error, Result};
use crate::graph::{prepare_rows, SimilarityMetric};
use crate::tensor::Matrix;

/// Tolerance for treating compressed labels as one-hot.
const ONE_HOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// Compressed node is the cluster mean.
    Centroid,
    /// Compressed node is the real member closest (cosine) to the mean.
    Medoid,
}

impl std::str::FromStr for CompressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(CompressionMode::Centroid),
            "medoid" => Ok(CompressionMode::Medoid),
            other => Err(Error::Config(format!("unknown compression mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CompressionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CompressionMode::Centroid => "centroid",
            CompressionMode::Medoid => "medoid",
        })
    }
}

/// Sparse N×K matrix with at most one nonzero per row.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    pub mode: CompressionMode,
    k: usize,
    entries: Vec<Option<(usize, f64)>>,
    medoids: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Nonzero `(column, weight)` of row `i`, if any.
    pub fn entry(&self, i: usize) -> Option<(usize, f64)> {
        self.entries[i]
    }

    /// Representative member of each cluster.
    pub fn medoids(&self) -> &[usize] {
        &self.medoids
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for &(j, w) in self.entries.iter().flatten() {
            s[j] += w;
        }
        s
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n(), self.k);
        for (i, e) in self.entries.iter().enumerate() {
            if let Some((j, w)) = *e {
                m.set(i, j, w);
            }
        }
        m
    }

    /// `Φᵀ·m`.
    pub fn transpose_mul(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.n() {
            return Err(dim("compress_features_labels", (self.n(), self.k), m.shape()));
        }
        let mut out = Matrix::zeros(self.k, m.cols());
        for (i, e) in self.entries.iter().enumerate() {
            if let Some((j, w)) = *e {
                for (o, v) in out.row_mut(j).iter_mut().zip(m.row(i)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Member with the highest cosine similarity to the cluster mean, ties to
/// the lower index.
pub fn medoid(x: &Matrix, members: &[usize]) -> Result<usize> {
    let rows = x.select_rows(members)?;
    let mut mean = Matrix::zeros(1, x.cols());
    for r in rows.iter_rows() {
        for (m, v) in mean.row_mut(0).iter_mut().zip(r) {
            *m += v;
        }
    }
    let inv = members.len() as f64;
    mean.as_mut_slice().iter_mut().for_each(|v| *v /= inv);
    let sims = crate::graph::prepared_similarities(
        &prepare_rows(&rows, SimilarityMetric::Cosine),
        &prepare_rows(&mean, SimilarityMetric::Cosine),
    )?;
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (p, &i) in members.iter().enumerate() {
        let s = sims.get(p, 0);
        if s > best.0 || (s == best.0 && i < best.1) {
            best = (s, i);
        }
    }
    Ok(best.1)
}

pub fn build_assignment(partition: &Partition, mode: CompressionMode, x: &Matrix) -> Result<AssignmentMatrix> {
    partition.validate()?;
    if x.rows() != partition.n {
        return Err(dim("build_assignment", (partition.n, partition.k()), x.shape()));
    }
    let mut entries = vec![None; partition.n];
    let mut medoids = Vec::with_capacity(partition.k());
    for (j, members) in partition.clusters.iter().enumerate() {
        let rep = medoid(x, members)?;
        medoids.push(rep);
        match mode {
            CompressionMode::Centroid => {
                let w = 1.0 / members.len() as f64;
                for &i in members {
                    entries[i] = Some((j, w));
                }
            }
            CompressionMode::Medoid => entries[rep] = Some((j, 1.0)),
        }
    }
    Ok(AssignmentMatrix { mode, k: partition.k(), entries, medoids })
}

/// `(Φᵀ X, Φᵀ Y, one_hot)`. When every entry of `Φᵀ Y` lies within 1e-9 of
/// 0 or 1 and each row has exactly one 1, the labels are snapped to exact
/// one-hot rows and the flag is set.
pub fn compress_features_labels(phi: &AssignmentMatrix, x: &Matrix, y: &Matrix) -> Result<(Matrix, Matrix, bool)> {
    let xt = phi.transpose_mul(x)?;
    let mut yt = phi.transpose_mul(y)?;
    let near = |v: f64, t: f64| (v - t).abs() <= ONE_HOT_TOL;
    let one_hot = y.cols() > 1
        && yt.iter_rows().all(|r| {
            r.iter().all(|&v| near(v, 0.0) || near(v, 1.0)) && r.iter().filter(|&&v| near(v, 1.0)).count() == 1
        });
    if one_hot {
        yt.as_mut_slice().iter_mut().for_each(|v| *v = if near(*v, 1.0) { 1.0 } else { 0.0 });
    }
    Ok((xt, yt, one_hot))
}
