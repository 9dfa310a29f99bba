//! Phase timings and quality for a sweep over compressed graph sizes.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingSet, EncoderModel};
use crate::error::{Error, Result};
use crate::inference::Scorer;
use crate::pipeline::{bundle_step, compress_step, evaluate, finetune_step, quality, train_gnn_step, PipelineConfig, Quality};
use crate::task::TaskKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// Compressed node count K.
    pub nodes: usize,
    pub quality: Quality,
    pub compression_s: f64,
    /// Training on the compressed graph.
    pub gnn_training_s: f64,
    pub finetune_s: f64,
    pub inference_mean_s: f64,
    pub inference_p99_s: f64,
    /// Bytes held by GNN weights and the compressed graph, excluding the
    /// encoder. An estimate from the structures themselves, not process RSS.
    pub model_graph_bytes: usize,
}

impl BenchRow {
    /// Compressed-graph training plus fine-tuning.
    pub fn training_s(&self) -> f64 {
        self.gnn_training_s + self.finetune_s
    }
}

/// Encoder head alone, for reference against the graph rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub quality: Quality,
    pub inference_mean_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub hardware: String,
    pub task: TaskKind,
    /// Original training nodes N.
    pub train_nodes: usize,
    pub test_samples: usize,
    pub baseline: Option<BaselineRow>,
    pub rows: Vec<BenchRow>,
}

/// CPU model and logical core count, from `/proc/cpuinfo` when readable.
pub fn hardware_descriptor() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{model} ({cores} logical cores)")
}

fn phase<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f().map_err(|e| e.in_phase(name))?;
    Ok((v, t.elapsed().as_secs_f64()))
}

/// Runs compress, train, fine-tune and one-at-a-time scoring for every K
/// in `ks`, timing each phase separately and sequentially.
pub fn run_benchmark(
    cfg: &PipelineConfig,
    train: &EmbeddingSet,
    test: &EmbeddingSet,
    ks: &[usize],
    encoder: Option<&EncoderModel>,
) -> Result<BenchReport> {
    if ks.is_empty() {
        return Err(Error::Parameter("benchmark needs at least one K".into()));
    }
    let baseline = match encoder {
        Some(enc) => {
            let t = Instant::now();
            let mut scores = Vec::with_capacity(test.len());
            for row in test.features.iter_rows() {
                scores.push(enc.predict_head(row)?.score());
            }
            let per = t.elapsed().as_secs_f64() / test.len().max(1) as f64;
            Some(BaselineRow {
                quality: quality(cfg.task, &scores, &test.labels).map_err(|e| e.in_phase("baseline"))?,
                inference_mean_s: per,
            })
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let c = PipelineConfig { k, ..cfg.clone() };
        let (graph, compression_s) = phase("compress", || compress_step(&c, train))?;
        let (gnn, gnn_training_s) = phase("train-gnn", || train_gnn_step(&c, &graph).map(|(m, _)| m))?;
        let (gnn, finetune_s) = phase("finetune", || finetune_step(&c, gnn, &graph, train).map(|(m, _)| m))?;
        let bundle = bundle_step(&c, None, gnn, graph).map_err(|e| e.in_phase("bundle"))?;
        let model_graph_bytes = bundle.byte_size();
        let scorer = Scorer::new(bundle)?;
        let eval = evaluate(&scorer, test).map_err(|e| e.in_phase("infer"))?;
        rows.push(BenchRow {
            nodes: k,
            quality: eval.report.graph_model,
            compression_s,
            gnn_training_s,
            finetune_s,
            inference_mean_s: eval.report.mean_latency_s,
            inference_p99_s: eval.report.p99_latency_s,
            model_graph_bytes,
        });
    }
    Ok(BenchReport {
        hardware: hardware_descriptor(),
        task: cfg.task,
        train_nodes: train.len(),
        test_samples: test.len(),
        baseline,
        rows,
    })
}

impl BenchReport {
    /// Aligned table with columns #Nodes, AUPRC/RMSE, R@P/sMAPE,
    /// Compression(s), Training(s), Inference(s/sample), then the
    /// model+graph byte estimate.
    pub fn to_table(&self) -> String {
        let (m1, m2) = match self.task {
            TaskKind::Classification => ("AUPRC", "R@P"),
            TaskKind::Regression => ("RMSE", "sMAPE"),
        };
        let header = ["#Nodes", m1, m2, "Compression(s)", "Training(s)", "Inference(s/sample)", "Model+graph bytes"];
        let mut lines: Vec<[String; 7]> = Vec::new();
        if let Some(b) = &self.baseline {
            lines.push([
                "encoder only".into(),
                format!("{:.4}", b.quality.primary()),
                format!("{:.4}", b.quality.secondary()),
                "--".into(),
                "--".into(),
                format!("{:.3e}", b.inference_mean_s),
                "--".into(),
            ]);
        }
        for r in &self.rows {
            lines.push([
                r.nodes.to_string(),
                format!("{:.4}", r.quality.primary()),
                format!("{:.4}", r.quality.secondary()),
                format!("{:.3}", r.compression_s),
                format!("{:.3}", r.training_s()),
                format!("{:.3e}", r.inference_mean_s),
                r.model_graph_bytes.to_string(),
            ]);
        }
        let mut widths = header.map(str::len);
        for l in &lines {
            for (w, cell) in widths.iter_mut().zip(l) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "N = {} original nodes, {} test samples, {}", self.train_nodes, self.test_samples, self.hardware);
        let row = |cells: Vec<&str>| -> String {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", row(header.to_vec()));
        for l in &lines {
            let _ = writeln!(out, "{}", row(l.iter().map(String::as_str).collect()));
        }
        out
    }
}
