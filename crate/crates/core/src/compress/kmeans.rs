//! Seeded k-means (k-means++ initialization, Lloyd iterations) and the
//! class-balanced partition built from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Label, TaskKind};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    /// Total number of clusters K.
    pub k: usize,
    /// Share of clusters given to the positive class in binary tasks.
    pub pos_ratio: f64,
    pub seed: u64,
    pub max_iters: usize,
    /// Cluster each class separately; `false` pools all nodes together.
    pub per_class: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 500,
            pos_ratio: 0.3,
            seed: 0,
            max_iters: 100,
            per_class: true,
        }
    }
}

/// Hard partition of node indices. Clusters of class 0 come first, then
/// class 1, and so on; within a class, clusters are ordered by their
/// smallest member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub n: usize,
    /// Members of each cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
    /// Class each cluster was drawn from; `None` for pooled clusters.
    pub cluster_class: Vec<Option<usize>>,
    /// Within-pool SSE after every Lloyd update, one trace per pool.
    pub sse_trace: Vec<Vec<f64>>,
}

impl Partition {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster index of every node.
    pub fn assignment(&self) -> Vec<usize> {
        let mut a = vec![usize::MAX; self.n];
        for (j, c) in self.clusters.iter().enumerate() {
            for &i in c {
                a[i] = j;
            }
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_class.len() != self.clusters.len() {
            return Err(Error::Precondition("cluster_class length differs from cluster count".into()));
        }
        let mut seen = vec![false; self.n];
        for c in &self.clusters {
            if c.is_empty() {
                return Err(Error::Precondition("empty cluster in partition".into()));
            }
            for &i in c {
                if i >= self.n {
                    return Err(Error::Index { index: i, len: self.n });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Precondition(format!("node {i} appears in two clusters")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Precondition(format!("node {i} is not covered by the partition")));
        }
        Ok(())
    }
}

/// Clusters per class: `round(pos_ratio·K)` positives for binary labels,
/// proportional shares (remainder to the largest classes) otherwise.
pub fn class_allotment(class_sizes: &[usize], k: usize, pos_ratio: f64) -> Result<Vec<usize>> {
    let classes = class_sizes.len();
    if k < classes {
        return Err(Error::Parameter(format!("K = {k} is below the class count {classes}")));
    }
    let allot = if classes == 2 {
        if !(pos_ratio > 0.0 && pos_ratio < 1.0) {
            return Err(Error::Parameter(format!("pos_ratio {pos_ratio} outside (0, 1)")));
        }
        let pos = (pos_ratio * k as f64).round() as usize;
        vec![k - pos, pos]
    } else {
        let n: usize = class_sizes.iter().sum();
        let mut allot: Vec<usize> = class_sizes.iter().map(|&s| k * s / n.max(1)).collect();
        let mut by_size: Vec<usize> = (0..classes).collect();
        by_size.sort_by(|&a, &b| class_sizes[b].cmp(&class_sizes[a]).then(a.cmp(&b)));
        let mut rest = k - allot.iter().sum::<usize>();
        for &c in by_size.iter().cycle() {
            if rest == 0 {
                break;
            }
            allot[c] += 1;
            rest -= 1;
        }
        allot
    };
    for (c, (&a, &s)) in allot.iter().zip(class_sizes).enumerate() {
        if (a == 0 && s > 0) || a > s {
            return Err(Error::InfeasibleBalance { class: c, members: s, clusters: a });
        }
    }
    Ok(allot)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += (x - y) * (x - y);
    }
    acc.iter().sum::<f64>() + tail
}

fn row_sq_norms(m: &Matrix) -> Vec<f64> {
    m.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect()
}

/// k-means++ seeds: first uniform, then proportional to squared distance
/// from the nearest seed. When every remaining point coincides with a
/// seed, the lowest unchosen index is taken.
fn seed_centers(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![false; n];
    let mut centers = Vec::with_capacity(k * x.cols());
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.extend_from_slice(x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the running sum just short of `target`.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            chosen.iter().position(|c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        centers.extend_from_slice(x.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    Matrix::from_raw(k, x.cols(), centers)
}

/// Nearest center per row, ties to the lower center index.
fn assign(x: &Matrix, x_norms: &[f64], centers: &Matrix) -> Result<Vec<usize>> {
    let cross = x.matmul_t(centers)?;
    let c_norms = row_sq_norms(centers);
    Ok((0..x.rows())
        .map(|i| {
            let row = cross.row(i);
            let mut best = (f64::INFINITY, 0);
            for (j, (&xc, &cn)) in row.iter().zip(&c_norms).enumerate() {
                let d = x_norms[i] - 2.0 * xc + cn;
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect())
}

fn update_centers(x: &Matrix, labels: &mut [usize], k: usize) -> (Matrix, f64) {
    let d = x.cols();
    loop {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                sums[c * d..(c + 1) * d].iter_mut().for_each(|v| *v /= inv);
            }
        }
        let centers = Matrix::from_raw(k, d, sums);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            let sse = (0..x.rows()).map(|i| sq_dist(x.row(i), centers.row(labels[i]))).sum();
            return (centers, sse);
        };
        // Move the point farthest from its centroid (from a cluster that
        // keeps at least one member) into the empty cluster.
        let mut far = (f64::NEG_INFINITY, 0);
        for (i, &c) in labels.iter().enumerate() {
            if counts[c] > 1 {
                let dist = sq_dist(x.row(i), centers.row(c));
                if dist > far.0 {
                    far = (dist, i);
                }
            }
        }
        labels[far.1] = empty;
    }
}

/// Plain k-means over the rows of `x`; returns per-row cluster labels and
/// the SSE trace.
pub fn kmeans(x: &Matrix, k: usize, rng: &mut ChaCha8Rng, max_iters: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} must lie in [1, {n}]")));
    }
    if k == n {
        return Ok(((0..n).collect(), vec![0.0]));
    }
    let x_norms = row_sq_norms(x);
    let mut centers = seed_centers(x, k, rng);
    let mut labels = assign(x, &x_norms, &centers)?;
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let (c, sse) = update_centers(x, &mut labels, k);
        centers = c;
        trace.push(sse);
        let next = assign(x, &x_norms, &centers)?;
        if next == labels {
            break;
        }
        labels = next;
    }
    // A final assignment may leave a cluster empty; repair it.
    update_centers(x, &mut labels, k);
    Ok((labels, trace))
}

fn clusters_of(pool: &[usize], labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut clusters = vec![Vec::new(); k];
    for (p, &c) in labels.iter().enumerate() {
        clusters[c].push(pool[p]);
    }
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Per-class k-means with the class allotment of [`class_allotment`], or a
/// single pool for regression and for `per_class = false`.
pub fn balanced_kmeans(x: &Matrix, labels: &[Label], task: TaskKind, config: &KMeansConfig) -> Result<Partition> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::Dimension { op: "balanced_kmeans", left: (labels.len(), 1), right: x.shape() });
    }
    if n == 0 {
        return Err(Error::EmptyInput("no nodes to compress".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pools: Vec<(Option<usize>, Vec<usize>, usize)> = Vec::new();
    if task == TaskKind::Classification && config.per_class {
        let width = crate::task::output_width(task, labels)?;
        let mut by_class = vec![Vec::new(); width];
        for (i, l) in labels.iter().enumerate() {
            if let Label::Class(c) = l {
                by_class[*c].push(i);
            }
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let allot = class_allotment(&sizes, config.k, config.pos_ratio)?;
        for (c, (members, k)) in by_class.into_iter().zip(allot).enumerate() {
            if k > 0 {
                pools.push((Some(c), members, k));
            }
        }
    } else {
        if config.k == 0 || config.k > n {
            return Err(Error::Parameter(format!("K = {} must lie in [1, {n}]", config.k)));
        }
        pools.push((None, (0..n).collect(), config.k));
    }
    let mut partition = Partition { n, clusters: Vec::new(), cluster_class: Vec::new(), sse_trace: Vec::new() };
    for (class, pool, k) in pools {
        let px = x.select_rows(&pool)?;
        let (assigned, trace) = kmeans(&px, k, &mut rng, config.max_iters)?;
        for c in clusters_of(&pool, &assigned, k) {
            partition.clusters.push(c);
            partition.cluster_class.push(class);
        }
        partition.sse_trace.push(trace);
    }
    Ok(partition)
}
