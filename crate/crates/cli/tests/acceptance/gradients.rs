use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use seqgraph::compress::{compress, BalancedKMeans, CompressOptions, CompressedGraph, CompressionMode, KMeansConfig};
use seqgraph::encoder::{sequence_loss_and_gradients, EncoderModel, Event, FieldSchema, FieldValue, SequenceDataset, SequenceRecord};
use seqgraph::gnn::{
    compressed_loss_and_gradients, compressed_objective, correlation_loss_and_gradients, view_loss_and_gradients, ConvKind, GnnModel,
    MessagePassingView,
};
use seqgraph::graph::{ConnectionRule, SimilarityMetric};
use seqgraph::layers::LossKind;
use seqgraph::task::{Label, TaskKind};
use seqgraph::tensor::Matrix;

use crate::common::{max_gradient_error, rng, uniform};
use crate::Verdict;

const TOL: f64 = 1e-4;
const INSTANCES: usize = 20;
const KINDS: [ConvKind; 4] = [ConvKind::Gcn, ConvKind::SageMean, ConvKind::SageMax, ConvKind::Gat];
const TASKS: [TaskKind; 2] = [TaskKind::Classification, TaskKind::Regression];

#[derive(Default)]
struct Family {
    name: String,
    instances: usize,
    worst: f64,
}

impl Family {
    fn named(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    fn record(&mut self, err: f64) {
        self.instances += 1;
        // NaN must count as a failure.
        self.worst = if err.is_nan() { f64::INFINITY } else { self.worst.max(err) };
    }
}

fn randomize(params: Vec<&mut Matrix>, rng: &mut ChaCha8Rng) {
    for p in params {
        for v in p.as_mut_slice() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

fn random_label(task: TaskKind, rng: &mut ChaCha8Rng) -> Label {
    match task {
        TaskKind::Classification => Label::Class(rng.random_range(0..2)),
        TaskKind::Regression => Label::Value(rng.random_range(-2.0..2.0)),
    }
}

fn random_records(rng: &mut ChaCha8Rng, task: TaskKind) -> Vec<SequenceRecord> {
    let n = rng.random_range(3..6);
    let t = rng.random_range(2..5);
    let cats = ["x", "y", "z"];
    (0..n)
        .map(|i| {
            let events = (0..t)
                .map(|_| {
                    let mut ev = Event::new();
                    ev.insert("amount".into(), FieldValue::Number(rng.random_range(-3.0..3.0)));
                    ev.insert("channel".into(), FieldValue::Text(cats[rng.random_range(0..cats.len())].into()));
                    ev
                })
                .collect();
            SequenceRecord { id: format!("r{i}"), events, label: random_label(task, rng) }
        })
        .collect()
}

fn encoder_family(task: TaskKind, seed: u64) -> Family {
    let mut fam = Family::named(format!("L_seq {task}"));
    let mut rng = rng(seed);
    for _ in 0..INSTANCES {
        let records = random_records(&mut rng, task);
        let data = SequenceDataset::new(records.clone()).unwrap();
        let schema = FieldSchema::fit(&data).unwrap();
        let outputs = if task == TaskKind::Classification { 2 } else { 1 };
        let hidden = rng.random_range(2..5);
        let depth = rng.random_range(1..3);
        let mut model = EncoderModel::new(schema, task, outputs, hidden, depth, &mut rng).unwrap();
        randomize(model.params_mut(), &mut rng);
        let refs: Vec<&SequenceRecord> = records.iter().collect();
        let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
        let (_, grads) = sequence_loss_and_gradients(&model, &refs, &labels).unwrap();
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let err = max_gradient_error(&params, &grads, |p| {
            let mut m = model.clone();
            for (dst, src) in m.params_mut().into_iter().zip(p) {
                *dst = src.clone();
            }
            sequence_loss_and_gradients(&m, &refs, &labels).unwrap().0
        });
        fam.record(err);
    }
    fam
}

fn with_params(model: &GnnModel, p: &[Matrix]) -> GnnModel {
    let mut m = model.clone();
    for (dst, src) in m.params_mut().into_iter().zip(p) {
        *dst = src.clone();
    }
    m
}

fn outputs(task: TaskKind) -> usize {
    if task == TaskKind::Classification {
        2
    } else {
        1
    }
}

fn random_gnn(kind: ConvKind, task: TaskKind, dim: usize, rng: &mut ChaCha8Rng) -> GnnModel {
    let width = rng.random_range(2..5);
    let mut model = GnnModel::new(kind, task, dim, width, outputs(task), rng).unwrap();
    randomize(model.params_mut(), rng);
    model
}

fn random_view(rng: &mut ChaCha8Rng, dim: usize) -> MessagePassingView {
    let n = rng.random_range(2..6);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let targets: Vec<usize> = nodes[..rng.random_range(1..=n)].to_vec();
    let neighbors = targets
        .iter()
        .map(|&t| (0..n).filter(|&j| j != t && rng.random_bool(0.6)).collect())
        .collect();
    let degrees = (0..n).map(|_| rng.random_range(1..5) as f64).collect();
    MessagePassingView::new(uniform(rng, n, dim, 1.5), targets, neighbors, degrees).unwrap()
}

fn random_target(task: TaskKind, rows: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut t = Matrix::zeros(rows, outputs(task));
    for r in 0..rows {
        match task {
            TaskKind::Classification => t.as_mut_slice()[r * 2 + rng.random_range(0..2)] = 1.0,
            TaskKind::Regression => t.as_mut_slice()[r] = rng.random_range(-2.0..2.0),
        }
    }
    t
}

fn conv_family(kind: ConvKind, task: TaskKind, seed: u64) -> Family {
    let mut fam = Family::named(format!("{kind} {task}"));
    let mut rng = rng(seed);
    for _ in 0..INSTANCES {
        let dim = rng.random_range(2..4);
        let model = random_gnn(kind, task, dim, &mut rng);
        let view = random_view(&mut rng, dim);
        let target = random_target(task, view.targets.len(), &mut rng);
        let loss = LossKind::for_task(task);
        let (_, grads) = view_loss_and_gradients(&model, &view, &target, loss).unwrap();
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let err = max_gradient_error(&params, &grads, |p| {
            view_loss_and_gradients(&with_params(&model, p), &view, &target, loss).unwrap().0
        });
        fam.record(err);
    }
    fam
}

/// Small compressed graph; `per_class = false` on classification mixes labels.
fn small_graph(rng: &mut ChaCha8Rng, task: TaskKind, per_class: bool) -> CompressedGraph {
    let n = 16;
    let dim = rng.random_range(2..4);
    let x = uniform(rng, n, dim, 1.0);
    let labels: Vec<Label> = (0..n)
        .map(|i| match task {
            TaskKind::Classification => Label::Class(i % 2),
            TaskKind::Regression => Label::Value(rng.random_range(-2.0..2.0)),
        })
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let strategy = BalancedKMeans(KMeansConfig { k: 4, pos_ratio: 0.5, seed: rng.random(), max_iters: 20, per_class });
    let options = CompressOptions {
        strategy: &strategy,
        mode: CompressionMode::Centroid,
        metric: SimilarityMetric::Cosine,
        epsilon: 0.3,
    };
    compress(&x, &ids, &labels, task, &options).unwrap()
}

/// L_com over the CE branch, the MSE branch on mixed labels, and regression.
fn compressed_family(seed: u64) -> (Family, [usize; 2]) {
    let mut fam = Family::named("L_com");
    let mut branches = [0usize; 2];
    let mut rng = rng(seed);
    for i in 0..3 * INSTANCES / 2 + 3 {
        let (task, per_class) = [(TaskKind::Classification, true), (TaskKind::Classification, false), (TaskKind::Regression, false)][i % 3];
        let graph = small_graph(&mut rng, task, per_class);
        match compressed_objective(&graph) {
            LossKind::CrossEntropy => branches[0] += 1,
            LossKind::MeanSquared => branches[1] += 1,
        }
        let model = random_gnn(KINDS[i % 4], task, graph.dim(), &mut rng);
        let (_, grads) = compressed_loss_and_gradients(&model, &graph).unwrap();
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let err = max_gradient_error(&params, &grads, |p| compressed_loss_and_gradients(&with_params(&model, p), &graph).unwrap().0);
        fam.record(err);
    }
    (fam, branches)
}

fn correlation_family(seed: u64) -> Family {
    let mut fam = Family::named("L_cor");
    let mut rng = rng(seed);
    let rule = ConnectionRule { metric: SimilarityMetric::Cosine, epsilon: 0.3, fallback_m: 2 };
    for i in 0..2 * INSTANCES {
        let task = TASKS[i % 2];
        let graph = small_graph(&mut rng, task, true);
        let model = random_gnn(KINDS[(i / 2) % 4], task, graph.dim(), &mut rng);
        let queries = uniform(&mut rng, 3, graph.dim(), 1.0);
        let labels: Vec<Label> = (0..3).map(|_| random_label(task, &mut rng)).collect();
        let (_, grads) = correlation_loss_and_gradients(&model, &graph, &queries, &labels, &rule).unwrap();
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let err = max_gradient_error(&params, &grads, |p| {
            correlation_loss_and_gradients(&with_params(&model, p), &graph, &queries, &labels, &rule).unwrap().0
        });
        fam.record(err);
    }
    fam
}

pub fn run() -> Verdict {
    let mut families = vec![encoder_family(TaskKind::Classification, 11), encoder_family(TaskKind::Regression, 12)];
    for (ki, kind) in KINDS.into_iter().enumerate() {
        for (ti, task) in TASKS.into_iter().enumerate() {
            families.push(conv_family(kind, task, 100 + (ki * 2 + ti) as u64));
        }
    }
    let (com, branches) = compressed_family(200);
    families.push(com);
    families.push(correlation_family(300));

    let worst = families.iter().map(|f| f.worst).fold(0.0, f64::max);
    let too_few: Vec<&str> = families.iter().filter(|f| f.instances < INSTANCES).map(|f| f.name.as_str()).collect();
    let bad: Vec<String> = families.iter().filter(|f| f.worst > TOL).map(|f| format!("{}={:.2e}", f.name, f.worst)).collect();
    let total: usize = families.iter().map(|f| f.instances).sum();
    let pass = bad.is_empty() && too_few.is_empty() && branches.iter().all(|&b| b > 0);
    let mut detail = format!(
        "{total} instances over {} families, max rel err {worst:.2e} (tol {TOL:.0e}); L_com CE/MSE instances {}/{}",
        families.len(),
        branches[0],
        branches[1]
    );
    if !bad.is_empty() {
        detail += &format!("; over tolerance: {}", bad.join(", "));
    }
    if !too_few.is_empty() {
        detail += &format!("; under {INSTANCES} instances: {}", too_few.join(", "));
    }
    Verdict::new(pass, detail)
}
