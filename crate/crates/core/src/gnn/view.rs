//! Local node tables with per-target neighbor lists.

use crate::compress::CompressedGraph;
use crate::error::{dim, Error, Result};
use crate::graph::adjacency;
use crate::tensor::Matrix;

/// Nodes whose representations are computed (`targets`), each with its
/// in-neighbors, all indexing rows of `features`.
#[derive(Clone, Debug, PartialEq)]
pub struct MessagePassingView {
    pub features: Matrix,
    pub targets: Vec<usize>,
    /// In-neighbors per target, ascending, never containing the target.
    pub neighbors: Vec<Vec<usize>>,
    /// Degree of every table row, self-loop included.
    pub degrees: Vec<f64>,
}

impl MessagePassingView {
    pub fn new(features: Matrix, targets: Vec<usize>, neighbors: Vec<Vec<usize>>, degrees: Vec<f64>) -> Result<Self> {
        let n = features.rows();
        if neighbors.len() != targets.len() || degrees.len() != n {
            return Err(Error::Precondition("view lists do not match the node table".into()));
        }
        for (t, list) in targets.iter().zip(&neighbors) {
            for &j in std::iter::once(t).chain(list) {
                if j >= n {
                    return Err(Error::Index { index: j, len: n });
                }
            }
            if list.contains(t) {
                return Err(Error::Precondition(format!("node {t} lists itself as a neighbor")));
            }
        }
        if degrees.iter().any(|&d| !(d >= 1.0)) {
            return Err(Error::Precondition("degrees include the self-loop and must be >= 1".into()));
        }
        Ok(Self { features, targets, neighbors, degrees })
    }

    /// Every compressed node as a target; each undirected edge of Ã
    /// yields messages in both directions.
    pub fn compressed(graph: &CompressedGraph) -> Self {
        let neighbors = adjacency(graph.k, &graph.edges);
        let degrees = neighbors.iter().map(|n| n.len() as f64 + 1.0).collect();
        Self { features: graph.features.clone(), targets: (0..graph.k).collect(), neighbors, degrees }
    }

    /// Queries attached to compressed nodes by directed compressed → query
    /// edges. Only the linked compressed rows enter the table, followed by
    /// the queries; queries never link to each other.
    pub fn attached(
        compressed: &Matrix,
        compressed_degrees: &[f64],
        queries: &Matrix,
        links: &[Vec<usize>],
    ) -> Result<Self> {
        if queries.cols() != compressed.cols() {
            return Err(dim("attach_queries", queries.shape(), compressed.shape()));
        }
        if links.len() != queries.rows() {
            return Err(Error::Precondition("one link list per query is required".into()));
        }
        let k = compressed.rows();
        let mut local = vec![usize::MAX; k];
        let mut used = Vec::new();
        for list in links {
            for &j in list {
                if j >= k {
                    return Err(Error::Index { index: j, len: k });
                }
                if local[j] == usize::MAX {
                    local[j] = 0;
                    used.push(j);
                }
            }
        }
        used.sort_unstable();
        for (p, &j) in used.iter().enumerate() {
            local[j] = p;
        }
        let base = used.len();
        let features = compressed.select_rows(&used)?.vstack(queries)?;
        let mut degrees: Vec<f64> = used.iter().map(|&j| compressed_degrees[j]).collect();
        degrees.extend(links.iter().map(|l| l.len() as f64 + 1.0));
        Ok(Self {
            features,
            targets: (base..base + queries.rows()).collect(),
            neighbors: links.iter().map(|l| l.iter().map(|&j| local[j]).collect()).collect(),
            degrees,
        })
    }
}

/// Ã degree plus self-loop for each compressed node.
pub fn compressed_degrees(graph: &CompressedGraph) -> Vec<f64> {
    let mut d = vec![1.0; graph.k];
    for &(a, b) in &graph.edges {
        d[a] += 1.0;
        d[b] += 1.0;
    }
    d
}
