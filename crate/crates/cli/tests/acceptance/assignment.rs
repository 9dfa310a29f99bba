use rand::seq::SliceRandom;
use rand::Rng;
use seqgraph::compress::{balanced_kmeans, build_assignment, CompressionMode, KMeansConfig};
use seqgraph::task::{Label, TaskKind};

use crate::common::{rng, uniform};
use crate::Verdict;

const RUNS: usize = 200;
const SUM_TOL: f64 = 1e-12;

pub fn run() -> Verdict {
    let mut r = rng(77);
    let mut failures = Vec::new();
    let mut nonzeros = [0usize; 2];
    for run in 0..RUNS {
        let mode = if run % 2 == 0 { CompressionMode::Centroid } else { CompressionMode::Medoid };
        let n = r.random_range(40..160);
        let k = r.random_range(2..n / 4);
        // Ratios rounding to zero clusters for a present class are rejected
        // as infeasible by design; draw until both classes get clusters.
        let (pos_ratio, want_pos) = loop {
            let p: f64 = r.random_range(0.05..0.7);
            let w = (p * k as f64).round() as usize;
            if w > 0 && w < k {
                break (p, w);
            }
        };
        // Enough nodes of each class for its clusters, plus slack.
        let positives = r.random_range(want_pos..=n - (k - want_pos));
        let mut labels: Vec<Label> = (0..n).map(|i| Label::Class(usize::from(i < positives))).collect();
        labels.shuffle(&mut r);
        let dim = r.random_range(2..6);
        let x = uniform(&mut r, n, dim, 1.0);
        let config = KMeansConfig { k, pos_ratio, seed: r.random(), max_iters: 30, per_class: true };
        let part = match balanced_kmeans(&x, &labels, TaskKind::Classification, &config) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("run {run}: {e}"));
                continue;
            }
        };
        let phi = build_assignment(&part, mode, &x).unwrap();
        let mut sums = vec![0.0; phi.k()];
        let mut rows_with_entry = 0;
        for i in 0..phi.n() {
            if let Some((j, w)) = phi.entry(i) {
                sums[j] += w;
                rows_with_entry += 1;
            }
        }
        let pos_clusters = part.cluster_class.iter().filter(|c| **c == Some(1)).count();
        let mut problems = Vec::new();
        if phi.k() != k {
            problems.push(format!("K = {} not {k}", phi.k()));
        }
        if let Some(s) = sums.iter().find(|s| (**s - 1.0).abs() > SUM_TOL) {
            problems.push(format!("column sum {s}"));
        }
        if mode == CompressionMode::Centroid && rows_with_entry != n {
            problems.push(format!("{} of {n} centroid rows have a nonzero", rows_with_entry));
        }
        if pos_clusters != want_pos {
            problems.push(format!("{pos_clusters} positive clusters, want round({pos_ratio:.3}·{k}) = {want_pos}"));
        }
        nonzeros[usize::from(mode == CompressionMode::Medoid)] += rows_with_entry;
        if !problems.is_empty() {
            failures.push(format!("run {run} ({mode}): {}", problems.join(", ")));
        }
    }
    let mut detail = format!(
        "{RUNS} compressions ({} per mode), column sums within {SUM_TOL:.0e}, {} centroid / {} medoid nonzeros",
        RUNS / 2,
        nonzeros[0],
        nonzeros[1]
    );
    if !failures.is_empty() {
        detail += &format!("; {} failing runs: {}", failures.len(), failures.iter().take(3).cloned().collect::<Vec<_>>().join("; "));
    }
    Verdict::new(failures.is_empty(), detail)
}
