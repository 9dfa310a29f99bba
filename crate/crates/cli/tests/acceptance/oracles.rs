use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use seqgraph::compress::{build_assignment, compress_features_labels, CompressionMode, Partition};
use seqgraph::gnn::{ConvKind, GnnModel, MessagePassingView, GAT_SLOPE};
use seqgraph::graph::{build_knn_graph, connect_to_compressed, epsilon_edges, ConnectionRule, SimilarityMetric};
use seqgraph::metrics::{auprc, recall_at_precision};
use seqgraph::task::TaskKind;
use seqgraph::tensor::Matrix;

use crate::common::{naive_similarity, rng, uniform};
use crate::Verdict;

const INSTANCES: usize = 100;
const REAL_TOL: f64 = 1e-9;
/// Instances with a similarity this close to a threshold or a rank tie are
/// redrawn: rounding may legitimately flip them.
const MARGIN: f64 = 1e-9;

struct Tally {
    name: &'static str,
    checked: usize,
    skipped: usize,
    failed: usize,
    mismatches: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self { name, checked: 0, skipped: 0, failed: 0, mismatches: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failed += 1;
            if self.mismatches.len() < 3 {
                self.mismatches.push(what());
            }
        }
    }

    fn ok(&self) -> bool {
        self.failed == 0 && self.checked >= INSTANCES
    }
}

fn random_metric(rng: &mut ChaCha8Rng) -> SimilarityMetric {
    if rng.random_bool(0.5) {
        SimilarityMetric::Cosine
    } else {
        SimilarityMetric::Pearson
    }
}

/// Random rows, occasionally with an all-zero row.
fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let mut x = uniform(rng, n, d, 1.0);
    if n > 2 && rng.random_bool(0.2) {
        let r = rng.random_range(0..n);
        x.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
    }
    x
}

fn sims(a: &Matrix, b: &Matrix, metric: SimilarityMetric) -> Vec<Vec<f64>> {
    a.iter_rows().map(|x| b.iter_rows().map(|y| naive_similarity(x, y, metric)).collect()).collect()
}

fn near_threshold(s: &[Vec<f64>], eps: f64) -> bool {
    s.iter().flatten().any(|v| (v - eps).abs() < MARGIN)
}

/// Any two distinct, nearly equal values in one row.
fn near_tie(row: &[f64]) -> bool {
    let mut v: Vec<f64> = row.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[1] - w[0] < MARGIN)
}

/// Top `k` of `row` by (value desc, index asc), optionally skipping one index.
fn naive_top(row: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| Some(j) != skip).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn epsilon_graph(rng: &mut ChaCha8Rng) -> Tally {
    let mut t = Tally::new("epsilon-graph");
    while t.checked < INSTANCES {
        let (n, d) = (rng.random_range(2..25), rng.random_range(2..6));
        let x = random_points(rng, n, d);
        let metric = random_metric(rng);
        let eps = rng.random_range(-0.5..0.95);
        let s = sims(&x, &x, metric);
        if near_threshold(&s, eps) {
            t.skipped += 1;
            continue;
        }
        let expect: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| s[i][j] > eps).collect();
        let got = epsilon_edges(&x, metric, eps).unwrap();
        t.check(got == expect, || format!("n={n} eps={eps}: {} vs {} edges", got.len(), expect.len()));
    }
    t
}

fn knn_graph(rng: &mut ChaCha8Rng) -> Tally {
    let mut t = Tally::new("knn-graph");
    while t.checked < INSTANCES {
        let (n, d) = (rng.random_range(3..25), rng.random_range(2..6));
        let x = uniform(rng, n, d, 1.0);
        let metric = random_metric(rng);
        let k = rng.random_range(1..n);
        let s = sims(&x, &x, metric);
        if s.iter().enumerate().any(|(i, row)| {
            let others: Vec<f64> = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect();
            near_tie(&others)
        }) {
            t.skipped += 1;
            continue;
        }
        let mut expect = BTreeSet::new();
        for (i, row) in s.iter().enumerate() {
            for j in naive_top(row, k, Some(i)) {
                expect.insert((i.min(j), i.max(j)));
            }
        }
        let got: BTreeSet<(usize, usize)> = build_knn_graph(&x, metric, k).unwrap().edges().iter().copied().collect();
        t.check(got == expect, || format!("n={n} k={k}: {} vs {} edges", got.len(), expect.len()));
    }
    t
}

fn connection(rng: &mut ChaCha8Rng) -> Tally {
    let mut t = Tally::new("connect_to_compressed");
    while t.checked < INSTANCES {
        let (q, k, d) = (rng.random_range(1..8), rng.random_range(1..12), rng.random_range(2..6));
        let queries = random_points(rng, q, d);
        let nodes = random_points(rng, k, d);
        let metric = random_metric(rng);
        // High thresholds make the fallback path common.
        let rule = ConnectionRule { metric, epsilon: rng.random_range(0.0..0.99), fallback_m: rng.random_range(1..4) };
        let s = sims(&queries, &nodes, metric);
        if near_threshold(&s, rule.epsilon) || s.iter().any(|r| near_tie(r)) {
            t.skipped += 1;
            continue;
        }
        let expect: Vec<Vec<usize>> = s
            .iter()
            .map(|row| {
                let linked: Vec<usize> = (0..k).filter(|&j| row[j] > rule.epsilon).collect();
                if !linked.is_empty() {
                    return linked;
                }
                let mut top = naive_top(row, rule.fallback_m, None);
                top.sort_unstable();
                top
            })
            .collect();
        let got = connect_to_compressed(&queries, &nodes, &rule).unwrap();
        t.check(got == expect, || format!("rule {rule:?}: {got:?} vs {expect:?}"));
    }
    t
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Partition {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut clusters = vec![Vec::new(); k];
    // First k shuffled nodes seed the clusters so none is empty.
    for (p, &i) in order.iter().enumerate() {
        let c = if p < k { p } else { rng.random_range(0..k) };
        clusters[c].push(i);
    }
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    Partition { n, cluster_class: vec![None; k], clusters, sse_trace: Vec::new() }
}

fn mean_row(x: &Matrix, members: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for &i in members {
        for (a, b) in m.iter_mut().zip(x.row(i)) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= members.len() as f64);
    m
}

fn close(a: &Matrix, b: &[Vec<f64>]) -> bool {
    a.rows() == b.len() && a.iter_rows().zip(b).all(|(r, e)| r.iter().zip(e).all(|(p, q)| (p - q).abs() <= REAL_TOL))
}

fn transport(rng: &mut ChaCha8Rng) -> Tally {
    let mut t = Tally::new("assignment transport");
    let mut round = 0usize;
    while t.checked < INSTANCES {
        round += 1;
        let mode = if round % 2 == 0 { CompressionMode::Centroid } else { CompressionMode::Medoid };
        let (n, d) = (rng.random_range(3..30), rng.random_range(2..5));
        let k = rng.random_range(1..n);
        let x = uniform(rng, n, d, 2.0);
        let classes = rng.random_range(1..4);
        let mut y = Matrix::zeros(n, classes);
        for i in 0..n {
            if classes == 1 {
                y.as_mut_slice()[i] = rng.random_range(-3.0..3.0);
            } else {
                y.as_mut_slice()[i * classes + rng.random_range(0..classes)] = 1.0;
            }
        }
        let part = random_partition(rng, n, k);
        let means: Vec<Vec<f64>> = part.clusters.iter().map(|c| mean_row(&x, c)).collect();
        let cos: Vec<Vec<f64>> = part
            .clusters
            .iter()
            .zip(&means)
            .map(|(c, m)| c.iter().map(|&i| naive_similarity(x.row(i), m, SimilarityMetric::Cosine)).collect())
            .collect();
        if cos.iter().any(|r| near_tie(r)) {
            t.skipped += 1;
            continue;
        }
        let medoids: Vec<usize> = part.clusters.iter().zip(&cos).map(|(c, s)| c[naive_top(s, 1, None)[0]]).collect();
        let (xe, ye): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match mode {
            CompressionMode::Centroid => (means, part.clusters.iter().map(|c| mean_row(&y, c)).collect()),
            CompressionMode::Medoid => medoids.iter().map(|&m| (x.row(m).to_vec(), y.row(m).to_vec())).unzip(),
        };
        let one_hot = classes > 1
            && ye.iter().all(|r| {
                r.iter().all(|&v| v.abs() <= REAL_TOL || (v - 1.0).abs() <= REAL_TOL)
                    && r.iter().filter(|&&v| (v - 1.0).abs() <= REAL_TOL).count() == 1
            });
        let phi = build_assignment(&part, mode, &x).unwrap();
        let (xt, yt, flag) = compress_features_labels(&phi, &x, &y).unwrap();
        let ok = phi.medoids() == medoids.as_slice() && close(&xt, &xe) && close(&yt, &ye) && flag == one_hot;
        t.check(ok, || format!("{mode} n={n} k={k}: medoids {:?} vs {medoids:?}, one_hot {flag} vs {one_hot}", phi.medoids()));
    }
    t
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        GAT_SLOPE * v
    }
}

/// x·W for a row vector `x` and a rows×cols weight.
fn row_times(x: &[f64], w: &Matrix) -> Vec<f64> {
    (0..w.cols()).map(|c| x.iter().enumerate().map(|(r, v)| v * w.get(r, c)).sum()).collect()
}

/// Message passing plus head written out per node.
fn naive_gnn(model: &GnnModel, view: &MessagePassingView) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = model.params();
    let (w, b) = (p[0], p[1]);
    let (hw, hb) = (p[p.len() - 2], p[p.len() - 1]);
    let x = &view.features;
    let mut reps = Vec::new();
    let mut outs = Vec::new();
    for (&i, nbrs) in view.targets.iter().zip(&view.neighbors) {
        let group: Vec<usize> = std::iter::once(i).chain(nbrs.iter().copied()).collect();
        let pre: Vec<f64> = match model.kind {
            ConvKind::Gcn => {
                let mut acc = vec![0.0; w.cols()];
                for &j in &group {
                    let c = 1.0 / (view.degrees[i] * view.degrees[j]).sqrt();
                    for (a, z) in acc.iter_mut().zip(row_times(x.row(j), w)) {
                        *a += c * z;
                    }
                }
                acc
            }
            ConvKind::SageMean | ConvKind::SageMax => {
                let d = x.cols();
                let mut agg = vec![0.0; d];
                if !nbrs.is_empty() {
                    for f in 0..d {
                        let vals = nbrs.iter().map(|&j| x.get(j, f));
                        agg[f] = if model.kind == ConvKind::SageMean {
                            vals.sum::<f64>() / nbrs.len() as f64
                        } else {
                            vals.fold(f64::NEG_INFINITY, f64::max)
                        };
                    }
                }
                let cat: Vec<f64> = x.row(i).iter().copied().chain(agg).collect();
                row_times(&cat, w)
            }
            ConvKind::Gat => {
                let (at, as_) = (p[2], p[3]);
                let z: Vec<Vec<f64>> = group.iter().map(|&j| row_times(x.row(j), w)).collect();
                let dot = |v: &[f64], a: &Matrix| v.iter().enumerate().map(|(r, q)| q * a.get(r, 0)).sum::<f64>();
                let zi_t = dot(&z[0], at);
                let e: Vec<f64> = z.iter().map(|zj| leaky(zi_t + dot(zj, as_))).collect();
                let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
                let total: f64 = ex.iter().sum();
                let mut acc = vec![0.0; w.cols()];
                for (zj, a) in z.iter().zip(&ex) {
                    for (o, v) in acc.iter_mut().zip(zj) {
                        *o += a / total * v;
                    }
                }
                acc
            }
        };
        let h: Vec<f64> = pre.iter().enumerate().map(|(c, v)| (v + b.get(0, c)).max(0.0)).collect();
        let logits: Vec<f64> = row_times(&h, hw).iter().enumerate().map(|(c, v)| v + hb.get(0, c)).collect();
        let out = match model.task {
            TaskKind::Classification => {
                let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = ex.iter().sum();
                ex.iter().map(|v| v / s).collect()
            }
            TaskKind::Regression => logits,
        };
        reps.push(h);
        outs.push(out);
    }
    (reps, outs)
}

fn gnn_forward(rng: &mut ChaCha8Rng) -> Tally {
    let mut t = Tally::new("gnn forward");
    let kinds = [ConvKind::Gcn, ConvKind::SageMean, ConvKind::SageMax, ConvKind::Gat];
    for inst in 0..2 * INSTANCES {
        let kind = kinds[inst % 4];
        let task = if inst % 8 < 4 { TaskKind::Classification } else { TaskKind::Regression };
        let n = rng.random_range(1..=5);
        let d = rng.random_range(1..4);
        let outputs = if task == TaskKind::Classification { rng.random_range(2..4) } else { 1 };
        let mut model = GnnModel::new(kind, task, d, rng.random_range(1..5), outputs, rng).unwrap();
        for p in model.params_mut() {
            p.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let targets: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
        let targets = if targets.is_empty() { vec![0] } else { targets };
        let neighbors = targets.iter().map(|&i| (0..n).filter(|&j| j != i && rng.random_bool(0.5)).collect()).collect();
        let degrees = (0..n).map(|_| rng.random_range(1..6) as f64).collect();
        let view = MessagePassingView::new(uniform(rng, n, d, 2.0), targets, neighbors, degrees).unwrap();
        let (reps, outs) = naive_gnn(&model, &view);
        let ok = close(&model.forward(&view).unwrap(), &reps) && close(&model.predict_view(&view).unwrap(), &outs);
        t.check(ok, || format!("{kind} {task} on {n} nodes"));
    }
    t
}

fn scored_labels(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..40);
    // Coarse scores force ties between and within classes.
    let levels = rng.random_range(2..12);
    let mut labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.3))).collect();
    labels[rng.random_range(0..n)] = 1.0;
    let scores = labels
        .iter()
        .map(|&l| (rng.random_range(0..levels) as f64 + l * rng.random_range(0.0..3.0)).round() / levels as f64)
        .collect();
    (scores, labels)
}

/// Average precision: mean over positives of the precision among all
/// samples scored at least as high.
fn naive_ap(scores: &[f64], labels: &[f64]) -> f64 {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i] == 1.0).collect();
    let total: f64 = pos
        .iter()
        .map(|&i| {
            let above: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= scores[i]).collect();
            above.iter().filter(|&&j| labels[j] == 1.0).count() as f64 / above.len() as f64
        })
        .sum();
    total / pos.len() as f64
}

/// Recall at precision ≥ pct/100, by exhaustive threshold enumeration in
/// integer arithmetic.
fn naive_rp(scores: &[f64], labels: &[f64], pct: usize) -> f64 {
    let positives = labels.iter().filter(|&&l| l == 1.0).count();
    scores
        .iter()
        .map(|&th| {
            let tp = (0..scores.len()).filter(|&j| scores[j] >= th && labels[j] == 1.0).count();
            let pp = (0..scores.len()).filter(|&j| scores[j] >= th).count();
            if 100 * tp >= pct * pp {
                tp as f64 / positives as f64
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn ranking_metrics(rng: &mut ChaCha8Rng) -> (Tally, Tally) {
    let mut ap = Tally::new("AUPRC");
    let mut rp = Tally::new("R@P");
    for _ in 0..2 * INSTANCES {
        let (s, l) = scored_labels(rng);
        let (want, got) = (naive_ap(&s, &l), auprc(&s, &l).unwrap());
        ap.check((want - got).abs() <= REAL_TOL, || format!("{got} vs {want}"));
        let pct = [50, 75, 80, 90, 100][rng.random_range(0..5)];
        let (want, got) = (naive_rp(&s, &l, pct), recall_at_precision(&s, &l, pct as f64 / 100.0).unwrap());
        rp.check((want - got).abs() <= REAL_TOL, || format!("p={pct}%: {got} vs {want}"));
    }
    (ap, rp)
}

pub fn run() -> Verdict {
    let mut r = rng(2024);
    let (ap, rp) = ranking_metrics(&mut r);
    let tallies = [epsilon_graph(&mut r), knn_graph(&mut r), connection(&mut r), transport(&mut r), gnn_forward(&mut r), ap, rp];
    let pass = tallies.iter().all(Tally::ok);
    let summary: Vec<String> = tallies
        .iter()
        .map(|t| {
            let mut s = format!("{} {}/{}", t.name, t.checked - t.failed, t.checked);
            if t.skipped > 0 {
                s += &format!(" ({} near-tie redraws)", t.skipped);
            }
            if !t.mismatches.is_empty() {
                s += &format!(" [{}]", t.mismatches.join("; "));
            }
            s
        })
        .collect();
    Verdict::new(pass, summary.join(", "))
}
