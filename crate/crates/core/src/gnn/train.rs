//! Training on the compressed graph and correlation fine-tuning of real
//! nodes attached to it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::GnnModel;
use super::view::{compressed_degrees, MessagePassingView};
use crate::compress::CompressedGraph;
use crate::error::{Error, Result};
use crate::graph::{connect_to_compressed, ConnectionRule};
use crate::layers::LossKind;
use crate::task::{target_matrix, Label, TaskKind};
use crate::tensor::{Adam, AdamConfig, Matrix, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnTrainConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        Self { lr: 5e-3, epochs: 50 }
    }
}

/// Real nodes used to pick the best epoch on the compressed graph.
pub struct HeldOut<'a> {
    pub features: &'a Matrix,
    pub labels: &'a [Label],
    pub rule: ConnectionRule,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnTrainReport {
    /// Objective that was minimized.
    pub loss_kind: LossKind,
    /// Loss before each update.
    pub loss_trace: Vec<f64>,
    pub held_out_trace: Vec<f64>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub rule: ConnectionRule,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub steps: usize,
}

fn check_task(model: &GnnModel, task: TaskKind) -> Result<()> {
    if model.task != task {
        return Err(Error::TaskMismatch(format!("model is {} but data is {task}", model.task)));
    }
    Ok(())
}

/// Objective on the compressed graph: cross-entropy for exact one-hot Ỹ,
/// mean squared error otherwise (on probabilities for classification).
pub fn compressed_objective(graph: &CompressedGraph) -> LossKind {
    if graph.task == TaskKind::Classification && graph.one_hot {
        LossKind::CrossEntropy
    } else {
        LossKind::MeanSquared
    }
}

/// Loss over a view plus gradients in `GnnModel::params` order.
pub fn view_loss_and_gradients(
    model: &GnnModel,
    view: &MessagePassingView,
    target: &Matrix,
    loss: LossKind,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let pred = model.predict_on_tape(&mut tape, &bound, view)?;
    let l = loss.apply(&mut tape, pred, target)?;
    let value = tape.scalar(l);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("GNN loss became {value}")));
    }
    let mut g = tape.backward(l)?;
    Ok((value, bound.vars().into_iter().map(|v| g.take(v)).collect()))
}

fn view_loss(model: &GnnModel, view: &MessagePassingView, target: &Matrix, loss: LossKind) -> Result<f64> {
    let pred = model.predict_view(view)?;
    match loss {
        LossKind::CrossEntropy => crate::tensor::ce_loss(&pred, target),
        LossKind::MeanSquared => crate::tensor::mse_loss(&pred, target),
    }
}

/// L_com on the compressed graph and its gradients.
pub fn compressed_loss_and_gradients(model: &GnnModel, graph: &CompressedGraph) -> Result<(f64, Vec<Matrix>)> {
    let view = MessagePassingView::compressed(graph);
    view_loss_and_gradients(model, &view, &graph.labels, compressed_objective(graph))
}

fn check_labels(model: &GnnModel, target: &Matrix) -> Result<()> {
    if target.cols() != model.outputs {
        return Err(Error::TaskMismatch(format!(
            "labels have width {} but the model emits {}",
            target.cols(),
            model.outputs
        )));
    }
    Ok(())
}

/// Full-batch Adam on the compressed graph. With `held_out`, the epoch
/// with the lowest held-out loss is kept and training stops after
/// `patience + 1` non-improving epochs.
pub fn train_on_compressed(
    model: &mut GnnModel,
    graph: &CompressedGraph,
    config: &GnnTrainConfig,
    held_out: Option<HeldOut<'_>>,
) -> Result<GnnTrainReport> {
    check_task(model, graph.task)?;
    check_labels(model, &graph.labels)?;
    if !graph.features.is_finite() || !graph.labels.is_finite() {
        return Err(Error::Numeric("compressed graph contains non-finite values".into()));
    }
    let loss_kind = compressed_objective(graph);
    let view = MessagePassingView::compressed(graph);
    let held = match &held_out {
        Some(h) => {
            let links = connect_to_compressed(h.features, &graph.features, &h.rule)?;
            let v = MessagePassingView::attached(&graph.features, &compressed_degrees(graph), h.features, &links)?;
            let t = target_matrix(graph.task, h.labels, model.outputs)?;
            Some((v, t, LossKind::for_task(graph.task), h.patience))
        }
        None => None,
    };
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), model.params());
    let mut report = GnnTrainReport { loss_kind, loss_trace: Vec::new(), held_out_trace: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, GnnModel)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let (l, grads) = view_loss_and_gradients(model, &view, &graph.labels, loss_kind)?;
        report.loss_trace.push(l);
        adam.step(&mut model.params_mut(), &grads)?;
        if let Some((v, t, k, patience)) = &held {
            let score = view_loss(model, v, t, *k)?;
            report.held_out_trace.push(score);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, model.clone()));
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale > *patience {
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(report)
}

/// L_cor for queries attached to the compressed graph, with gradients.
pub fn correlation_loss_and_gradients(
    model: &GnnModel,
    graph: &CompressedGraph,
    queries: &Matrix,
    labels: &[Label],
    rule: &ConnectionRule,
) -> Result<(f64, Vec<Matrix>)> {
    let links = connect_to_compressed(queries, &graph.features, rule)?;
    let view = MessagePassingView::attached(&graph.features, &compressed_degrees(graph), queries, &links)?;
    let target = target_matrix(model.task, labels, model.outputs)?;
    view_loss_and_gradients(model, &view, &target, LossKind::for_task(model.task))
}

/// Predictions for `queries` computed exactly as a fine-tuning step
/// computes them (tracked tape, same view construction).
pub fn finetune_forward(
    model: &GnnModel,
    graph: &CompressedGraph,
    queries: &Matrix,
    rule: &ConnectionRule,
) -> Result<Matrix> {
    let links = connect_to_compressed(queries, &graph.features, rule)?;
    let view = MessagePassingView::attached(&graph.features, &compressed_degrees(graph), queries, &links)?;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let pred = model.predict_on_tape(&mut tape, &bound, &view)?;
    Ok(tape.into_value(pred))
}

/// Mini-batch fine-tuning of every GNN weight on real nodes linked to the
/// (frozen) compressed nodes.
pub fn finetune_correlation(
    model: &mut GnnModel,
    h: &Matrix,
    labels: &[Label],
    graph: &CompressedGraph,
    config: &FinetuneConfig,
) -> Result<FinetuneReport> {
    if graph.k == 0 {
        return Err(Error::Precondition("compressed graph is empty".into()));
    }
    check_task(model, graph.task)?;
    if h.rows() != labels.len() {
        return Err(Error::Dimension { op: "finetune_correlation", left: (labels.len(), 1), right: h.shape() });
    }
    if h.rows() == 0 {
        return Err(Error::EmptyInput("no real nodes to fine-tune on".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Parameter("batch_size must be positive".into()));
    }
    let links = connect_to_compressed(h, &graph.features, &config.rule)?;
    let degrees = compressed_degrees(graph);
    let target = target_matrix(model.task, labels, model.outputs)?;
    let loss = LossKind::for_task(model.task);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), model.params());
    let mut order: Vec<usize> = (0..h.rows()).collect();
    let mut report = FinetuneReport::default();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let q = h.select_rows(batch)?;
            let l: Vec<Vec<usize>> = batch.iter().map(|&i| links[i].clone()).collect();
            let view = MessagePassingView::attached(&graph.features, &degrees, &q, &l)?;
            let (value, grads) = view_loss_and_gradients(model, &view, &target.select_rows(batch)?, loss)?;
            adam.step(&mut model.params_mut(), &grads)?;
            total += value * batch.len() as f64;
            report.steps += 1;
        }
        report.loss_trace.push(total / h.rows() as f64);
    }
    Ok(report)
}
