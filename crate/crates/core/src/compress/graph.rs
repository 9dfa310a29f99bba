//! The compressed graph with provenance, and the compression entry point.

use serde::{Deserialize, Serialize};

use super::assignment::{build_assignment, compress_features_labels, CompressionMode};
use super::kmeans::{balanced_kmeans, KMeansConfig, Partition};
use crate::error::{Error, Result};
use crate::graph::{epsilon_edges, SimilarityMetric};
use crate::task::{output_width, target_matrix, Label, TaskKind};
use crate::tensor::Matrix;

/// Produces a partition of the nodes; the assignment matrix is derived
/// from it.
pub trait CompressionStrategy {
    fn partition(&self, x: &Matrix, labels: &[Label], task: TaskKind) -> Result<Partition>;
}

/// Class-balanced k-means.
#[derive(Clone, Debug, PartialEq)]
pub struct BalancedKMeans(pub KMeansConfig);

impl CompressionStrategy for BalancedKMeans {
    fn partition(&self, x: &Matrix, labels: &[Label], task: TaskKind) -> Result<Partition> {
        balanced_kmeans(x, labels, task, &self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub medoid_id: String,
    pub member_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedGraph {
    pub k: usize,
    pub task: TaskKind,
    pub mode: CompressionMode,
    pub metric: SimilarityMetric,
    pub epsilon: f64,
    /// X̃, K×D.
    pub features: Matrix,
    /// Ỹ, K×c or K×1.
    pub labels: Matrix,
    /// Whether Ỹ rows are exact one-hot vectors.
    pub one_hot: bool,
    /// Undirected ε-edges over compressed nodes, `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Original node indices per compressed node, ascending.
    pub members: Vec<Vec<usize>>,
    pub medoids: Vec<usize>,
    pub cluster_class: Vec<Option<usize>>,
    /// Ids of the original nodes, indexed by node.
    pub source_ids: Vec<String>,
}

pub struct CompressOptions<'a> {
    pub strategy: &'a dyn CompressionStrategy,
    pub mode: CompressionMode,
    pub metric: SimilarityMetric,
    pub epsilon: f64,
}

/// Partitions the nodes, transports features and labels through Φ and
/// rebuilds the adjacency by the ε rule on X̃.
pub fn compress(
    x: &Matrix,
    ids: &[String],
    labels: &[Label],
    task: TaskKind,
    options: &CompressOptions<'_>,
) -> Result<CompressedGraph> {
    let n = x.rows();
    if ids.len() != n || labels.len() != n {
        return Err(Error::Dimension { op: "compress", left: (ids.len(), labels.len()), right: x.shape() });
    }
    let partition = options.strategy.partition(x, labels, task)?;
    if partition.k() >= n {
        return Err(Error::Parameter(format!("K = {} must be below N = {n}", partition.k())));
    }
    let phi = build_assignment(&partition, options.mode, x)?;
    let width = output_width(task, labels)?;
    let y = target_matrix(task, labels, width)?;
    let (features, labels, one_hot) = compress_features_labels(&phi, x, &y)?;
    let edges = compress_adjacency(&features, options.metric, options.epsilon)?;
    Ok(CompressedGraph {
        k: partition.k(),
        task,
        mode: options.mode,
        metric: options.metric,
        epsilon: options.epsilon,
        features,
        labels,
        one_hot,
        edges,
        members: partition.clusters,
        medoids: phi.medoids().to_vec(),
        cluster_class: partition.cluster_class,
        source_ids: ids.to_vec(),
    })
}

/// ε-graph over compressed features.
pub fn compress_adjacency(xt: &Matrix, metric: SimilarityMetric, epsilon: f64) -> Result<Vec<(usize, usize)>> {
    epsilon_edges(xt, metric, epsilon)
}

impl CompressedGraph {
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn trace_representatives(&self, j: usize) -> Result<Representative> {
        if j >= self.k {
            return Err(Error::Index { index: j, len: self.k });
        }
        Ok(Representative {
            medoid_id: self.source_ids[self.medoids[j]].clone(),
            member_ids: self.members[j].iter().map(|&i| self.source_ids[i].clone()).collect(),
        })
    }

    /// Bytes held by features, labels and edges.
    pub fn byte_size(&self) -> usize {
        self.features.byte_size() + self.labels.byte_size() + self.edges.len() * 2 * std::mem::size_of::<usize>()
    }

    /// Structural checks applied after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::BundleIntegrity(d));
        if self.features.rows() != self.k || self.labels.rows() != self.k {
            return bad(format!("K = {} but X̃ has {} rows and Ỹ {}", self.k, self.features.rows(), self.labels.rows()));
        }
        if self.members.len() != self.k || self.medoids.len() != self.k || self.cluster_class.len() != self.k {
            return bad("provenance lists do not match K".into());
        }
        let n = self.source_ids.len();
        let mut seen = vec![false; n];
        for (j, m) in self.members.iter().enumerate() {
            if !m.contains(&self.medoids[j]) {
                return bad(format!("medoid of compressed node {j} is not a member"));
            }
            for &i in m {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return bad(format!("member {i} of compressed node {j} is out of range or repeated"));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("member lists do not cover every original node".into());
        }
        for &(a, b) in &self.edges {
            if a >= b || b >= self.k {
                return bad(format!("invalid compressed edge ({a}, {b})"));
            }
        }
        Ok(())
    }
}
