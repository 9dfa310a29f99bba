//! Similarity graphs over node features and query-to-compressed links.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::similarity::{prepare_rows, prepared_similarities, SimilarityMetric};
use crate::error::{Error, Result};
use crate::task::Label;
use crate::tensor::Matrix;

/// Rows per similarity block; bounds the working set to `BLOCK × N`.
const BLOCK: usize = 512;

/// Undirected graph; each edge is stored once as `(i, j)` with `i < j`, in
/// ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationGraph {
    pub features: Matrix,
    pub labels: Option<Vec<Label>>,
    edges: Vec<(usize, usize)>,
}

impl RelationGraph {
    pub fn new(features: Matrix, edges: Vec<(usize, usize)>, labels: Option<Vec<Label>>) -> Result<Self> {
        let n = features.rows();
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        for &(a, b) in &set {
            if a == b {
                return Err(Error::Parameter(format!("self-loop on node {a}")));
            }
            if b >= n {
                return Err(Error::Index { index: b, len: n });
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension { op: "relation_graph", left: (l.len(), 1), right: features.shape() });
            }
        }
        Ok(Self { features, labels, edges: set.into_iter().collect() })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor lists in ascending order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.node_count(), &self.edges)
    }
}

pub(crate) fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj.iter_mut().for_each(|v| v.sort_unstable());
    adj
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&epsilon) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside [-1, 1]")));
    }
    Ok(())
}

/// Calls `f(i, sims_i)` for each row `i` with its similarities to every
/// row of `x`.
fn for_each_similarity_row(prepared: &Matrix, mut f: impl FnMut(usize, &[f64])) -> Result<()> {
    let n = prepared.rows();
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let block = prepared_similarities(&prepared.select_rows(&idx)?, prepared)?;
        for (r, i) in (start..end).enumerate() {
            f(i, block.row(r));
        }
        start = end;
    }
    Ok(())
}

/// Pairs `(i, j)`, `i < j`, with similarity strictly above `epsilon`.
pub fn epsilon_edges(x: &Matrix, metric: SimilarityMetric, epsilon: f64) -> Result<Vec<(usize, usize)>> {
    check_epsilon(epsilon)?;
    let prepared = prepare_rows(x, metric);
    let mut edges = Vec::new();
    for_each_similarity_row(&prepared, |i, sims| {
        for (j, &s) in sims.iter().enumerate().skip(i + 1) {
            if s > epsilon {
                edges.push((i, j));
            }
        }
    })?;
    Ok(edges)
}

pub fn build_epsilon_graph(x: &Matrix, metric: SimilarityMetric, epsilon: f64) -> Result<RelationGraph> {
    let edges = epsilon_edges(x, metric, epsilon)?;
    Ok(RelationGraph { features: x.clone(), labels: None, edges })
}

/// Indices of the `k` largest scores, ties to the lower index.
pub(crate) fn top_k(scores: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| Some(j) != skip).collect();
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable_by(order);
    idx
}

/// Union k-NN graph: `(i, j)` whenever either is among the other's top `k`.
pub fn build_knn_graph(x: &Matrix, metric: SimilarityMetric, k: usize) -> Result<RelationGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k = {k} must lie in [1, {n})")));
    }
    let prepared = prepare_rows(x, metric);
    let mut set = BTreeSet::new();
    for_each_similarity_row(&prepared, |i, sims| {
        for j in top_k(sims, k, Some(i)) {
            set.insert((i.min(j), i.max(j)));
        }
    })?;
    Ok(RelationGraph { features: x.clone(), labels: None, edges: set.into_iter().collect() })
}

/// How a query node attaches to compressed nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRule {
    pub metric: SimilarityMetric,
    pub epsilon: f64,
    /// Links used when no compressed node clears `epsilon`.
    pub fallback_m: usize,
}

impl ConnectionRule {
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if self.fallback_m == 0 {
            return Err(Error::Parameter("fallback_m must be at least 1".into()));
        }
        Ok(())
    }
}

/// Compressed-node links for each row of a similarity matrix.
pub(crate) fn links_from_similarities(sims: &Matrix, rule: &ConnectionRule) -> Vec<Vec<usize>> {
    sims.iter_rows()
        .map(|row| {
            let mut linked: Vec<usize> = (0..row.len()).filter(|&j| row[j] > rule.epsilon).collect();
            if linked.is_empty() {
                linked = top_k(row, rule.fallback_m, None);
                linked.sort_unstable();
            }
            linked
        })
        .collect()
}

/// Sorted compressed-node indices linked to each query row. No query is
/// ever left without a link.
pub fn connect_to_compressed(queries: &Matrix, compressed: &Matrix, rule: &ConnectionRule) -> Result<Vec<Vec<usize>>> {
    rule.validate()?;
    if compressed.rows() == 0 {
        return Err(Error::Precondition("no compressed nodes to connect to".into()));
    }
    let q = prepare_rows(queries, rule.metric);
    let c = prepare_rows(compressed, rule.metric);
    Ok(links_from_similarities(&prepared_similarities(&q, &c)?, rule))
}

/// Edge list CSV `src,dst`.
pub fn write_edges<W: Write>(edges: &[(usize, usize)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(["src", "dst"]).map_err(io)?;
    for &(a, b) in edges {
        w.write_record([a.to_string(), b.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edges<R: Read>(input: R) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut edges = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| Error::Parse { line, message: format!("bad node id `{s}`") })
        };
        if row.len() != 2 {
            return Err(Error::Parse { line, message: "expected `src,dst`".into() });
        }
        edges.push((parse(&row[0])?, parse(&row[1])?));
    }
    Ok(edges)
}

pub fn save_edges(edges: &[(usize, usize)], path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_edges(edges, f)
}

pub fn load_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    read_edges(std::fs::File::open(path)?)
}
