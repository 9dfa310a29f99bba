//! The training procedure as separately callable steps, plus evaluation of
//! a finished bundle against the encoder-only baseline.
//!
//! Every step is a pure function of its inputs and the configuration, so
//! running the steps one by one reproduces a single end-to-end run exactly.

mod config;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;

use crate::compress::{compress, BalancedKMeans, CompressOptions, CompressedGraph, KMeansConfig};
use crate::encoder::{train_encoder, EmbeddingSet, EncoderModel, EncoderTrainConfig, EncoderTrainReport, SequenceDataset};
use crate::error::{Error, Result};
use crate::gnn::{finetune_correlation, train_on_compressed, FinetuneConfig, FinetuneReport, GnnModel, GnnTrainConfig, GnnTrainReport};
use crate::graph::{build_epsilon_graph, build_knn_graph, RelationGraph};
use crate::inference::{DeployBundle, Query, Scorer};
use crate::metrics::{auprc, recall_at_precision, rmse, smape, DEFAULT_PRECISION};
use crate::task::{output_width, Label, TaskKind};

// Distinct stream offsets so steps never share random draws.
const KMEANS_STREAM: u64 = 0x6b6d;
const GNN_INIT_STREAM: u64 = 0x676e;
const FINETUNE_STREAM: u64 = 0x6674;

fn check_task(cfg: &PipelineConfig, labels: &[Label]) -> Result<()> {
    output_width(cfg.task, labels).map(|_| ())
}

pub fn encoder_config(cfg: &PipelineConfig) -> EncoderTrainConfig {
    EncoderTrainConfig {
        task: cfg.task,
        hidden: cfg.hidden,
        head_depth: cfg.head_depth,
        lr: cfg.encoder_lr,
        batch_size: cfg.batch_size,
        max_epochs: cfg.encoder_epochs,
        patience: cfg.patience,
        seed: cfg.seed,
    }
}

/// Step 1: sequence encoder with its prediction head.
pub fn train_encoder_step(
    cfg: &PipelineConfig,
    train: &SequenceDataset,
    val: &SequenceDataset,
) -> Result<(EncoderModel, EncoderTrainReport)> {
    cfg.validate()?;
    train_encoder(train, val, &encoder_config(cfg))
}

pub fn embed_step(encoder: &EncoderModel, dataset: &SequenceDataset) -> Result<EmbeddingSet> {
    EmbeddingSet::new(dataset.ids(), encoder.embed_all(dataset)?, dataset.labels())
}

/// The full relation graph over training nodes: ε rule, or k-NN when
/// `graph_k > 0`. Only needed for inspection; compression works from the
/// embeddings directly.
pub fn build_graph_step(cfg: &PipelineConfig, nodes: &EmbeddingSet) -> Result<RelationGraph> {
    let mut g = if cfg.graph_k > 0 {
        build_knn_graph(&nodes.features, cfg.metric, cfg.graph_k)?
    } else {
        build_epsilon_graph(&nodes.features, cfg.metric, cfg.epsilon)?
    };
    g.labels = Some(nodes.labels.clone());
    Ok(g)
}

pub fn kmeans_config(cfg: &PipelineConfig) -> KMeansConfig {
    KMeansConfig {
        k: cfg.k,
        pos_ratio: cfg.pos_ratio,
        seed: cfg.seed ^ KMEANS_STREAM,
        max_iters: cfg.kmeans_iters,
        per_class: cfg.per_class,
    }
}

/// Step 2: compressed graph with provenance.
pub fn compress_step(cfg: &PipelineConfig, nodes: &EmbeddingSet) -> Result<CompressedGraph> {
    cfg.validate()?;
    check_task(cfg, &nodes.labels)?;
    let strategy = BalancedKMeans(kmeans_config(cfg));
    let options = CompressOptions {
        strategy: &strategy,
        mode: cfg.mode,
        metric: cfg.metric,
        epsilon: cfg.epsilon,
    };
    compress(&nodes.features, &nodes.ids, &nodes.labels, cfg.task, &options)
}

fn outputs_of(graph: &CompressedGraph) -> usize {
    match graph.task {
        TaskKind::Classification => graph.labels.cols(),
        TaskKind::Regression => 1,
    }
}

/// Step 3a: fresh GNN trained on the compressed graph alone.
pub fn train_gnn_step(cfg: &PipelineConfig, graph: &CompressedGraph) -> Result<(GnnModel, GnnTrainReport)> {
    cfg.validate()?;
    if graph.task != cfg.task {
        return Err(Error::TaskMismatch(format!("compressed graph is {} but config is {}", graph.task, cfg.task)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ GNN_INIT_STREAM);
    let mut model = GnnModel::new(cfg.conv, cfg.task, graph.dim(), cfg.width, outputs_of(graph), &mut rng)?;
    let report = train_on_compressed(
        &mut model,
        graph,
        &GnnTrainConfig {
            lr: cfg.gnn_lr,
            epochs: cfg.gnn_epochs,
        },
        None,
    )?;
    Ok((model, report))
}

pub fn finetune_config(cfg: &PipelineConfig) -> FinetuneConfig {
    FinetuneConfig {
        lr: cfg.finetune_lr,
        epochs: cfg.finetune_epochs,
        batch_size: cfg.finetune_batch,
        seed: cfg.seed ^ FINETUNE_STREAM,
        rule: cfg.rule(),
    }
}

/// Step 3b: correlation fine-tuning on real training nodes.
pub fn finetune_step(
    cfg: &PipelineConfig,
    mut model: GnnModel,
    graph: &CompressedGraph,
    nodes: &EmbeddingSet,
) -> Result<(GnnModel, FinetuneReport)> {
    cfg.validate()?;
    let report = finetune_correlation(&mut model, &nodes.features, &nodes.labels, graph, &finetune_config(cfg))?;
    Ok((model, report))
}

pub fn bundle_step(
    cfg: &PipelineConfig,
    encoder: Option<EncoderModel>,
    gnn: GnnModel,
    graph: CompressedGraph,
) -> Result<DeployBundle> {
    DeployBundle::new(cfg.task, encoder, gnn, graph, cfg.rule(), cfg.to_map())
}

/// Test-set quality of one scorer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Quality {
    Classification { auprc: f64, recall_at_precision: f64 },
    Regression { rmse: f64, smape: f64 },
}

impl Quality {
    /// AUPRC for classification, RMSE for regression.
    pub fn primary(&self) -> f64 {
        match *self {
            Quality::Classification { auprc, .. } => auprc,
            Quality::Regression { rmse, .. } => rmse,
        }
    }

    /// R@P for classification, sMAPE for regression.
    pub fn secondary(&self) -> f64 {
        match *self {
            Quality::Classification { recall_at_precision, .. } => recall_at_precision,
            Quality::Regression { smape, .. } => smape,
        }
    }

    /// Whether `self` is at least as good as `other` on the primary metric.
    pub fn at_least_as_good_as(&self, other: &Quality) -> bool {
        match self {
            Quality::Classification { .. } => self.primary() >= other.primary(),
            Quality::Regression { .. } => self.primary() <= other.primary(),
        }
    }
}

/// Metrics of `scores` against `labels`. Regression scores are clamped at
/// zero first, since the targets are nonnegative counts.
pub fn quality(task: TaskKind, scores: &[f64], labels: &[Label]) -> Result<Quality> {
    match task {
        TaskKind::Classification => {
            let y: Vec<f64> = labels.iter().map(|l| if l.as_f64() == 1.0 { 1.0 } else { 0.0 }).collect();
            Ok(Quality::Classification {
                auprc: auprc(scores, &y)?,
                recall_at_precision: recall_at_precision(scores, &y, DEFAULT_PRECISION)?,
            })
        }
        TaskKind::Regression => {
            let y: Vec<f64> = labels.iter().map(|l| l.as_f64()).collect();
            let p: Vec<f64> = scores.iter().map(|s| s.max(0.0)).collect();
            Ok(Quality::Regression {
                rmse: rmse(&p, &y)?,
                smape: smape(&p, &y)?,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub samples: usize,
    pub compressed_nodes: usize,
    pub graph_model: Quality,
    /// The bundled encoder's own head, when the bundle carries an encoder.
    pub encoder_only: Option<Quality>,
    pub mean_latency_s: f64,
    pub p99_latency_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Per-sample `(id, score, latency_s)` from the graph model.
    pub scores: Vec<(String, f64, f64)>,
}

/// Scores every test embedding one at a time through the bundle and, when
/// available, through the encoder head.
pub fn evaluate(scorer: &Scorer, test: &EmbeddingSet) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyInput("no test samples to evaluate".into()));
    }
    let bundle = scorer.bundle();
    let queries: Vec<Query<'_>> = test
        .ids
        .iter()
        .zip(test.features.iter_rows())
        .map(|(id, values)| Query::Embedding { id, values })
        .collect();
    let batch = scorer.score_batch(&queries)?;
    let scores: Vec<f64> = batch.results.iter().map(|r| r.score).collect();
    let graph_model = quality(bundle.task, &scores, &test.labels)?;
    let encoder_only = match &bundle.encoder {
        Some(enc) => {
            let out = enc.predict_embeddings(&test.features)?;
            let s: Vec<f64> = out
                .iter_rows()
                .map(|r| crate::task::Prediction::from_row(bundle.task, r).score())
                .collect();
            Some(quality(bundle.task, &s, &test.labels)?)
        }
        None => None,
    };
    Ok(Evaluation {
        report: EvalReport {
            task: bundle.task,
            samples: test.len(),
            compressed_nodes: bundle.compressed.k,
            graph_model,
            encoder_only,
            mean_latency_s: batch.mean_latency_s,
            p99_latency_s: batch.p99_latency_s,
        },
        scores: batch.results.iter().map(|r| (r.id.clone(), r.score, r.timing.total())).collect(),
    })
}

/// Everything produced by one end-to-end training run.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub encoder_report: EncoderTrainReport,
    pub gnn_report: GnnTrainReport,
    pub finetune_report: FinetuneReport,
    pub train_embeddings: EmbeddingSet,
    pub bundle: DeployBundle,
}

/// Encoder, embeddings, compression, GNN training and fine-tuning in order.
/// The full relation graph is never materialized.
pub fn run_training(cfg: &PipelineConfig, train: &SequenceDataset, val: &SequenceDataset) -> Result<PipelineRun> {
    let (encoder, encoder_report) = train_encoder_step(cfg, train, val)?;
    let train_embeddings = embed_step(&encoder, train)?;
    let graph = compress_step(cfg, &train_embeddings)?;
    let (gnn, gnn_report) = train_gnn_step(cfg, &graph)?;
    let (gnn, finetune_report) = finetune_step(cfg, gnn, &graph, &train_embeddings)?;
    let bundle = bundle_step(cfg, Some(encoder), gnn, graph)?;
    Ok(PipelineRun {
        encoder_report,
        gnn_report,
        finetune_report,
        train_embeddings,
        bundle,
    })
}
