//! Frozen deployment bundle and single-sequence scoring.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compress::CompressedGraph;
use crate::encoder::{EncoderModel, SequenceRecord};
use crate::error::{Error, Result};
use crate::gnn::{compressed_degrees, GnnModel, MessagePassingView};
use crate::graph::{links_from_similarities, prepare_rows, prepared_similarities, top_k, ConnectionRule};
use crate::task::{Prediction, TaskKind};
use crate::tensor::Matrix;

pub const BUNDLE_FORMAT: &str = "seqgraph-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Everything needed to score a new sequence, without the training corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeployBundle {
    pub format: String,
    pub version: u32,
    pub task: TaskKind,
    /// `None` when queries arrive as precomputed embeddings.
    pub encoder: Option<EncoderModel>,
    pub gnn: GnnModel,
    pub compressed: CompressedGraph,
    pub rule: ConnectionRule,
    /// Configuration the bundle was built with, verbatim.
    pub config: BTreeMap<String, String>,
}

impl DeployBundle {
    pub fn new(
        task: TaskKind,
        encoder: Option<EncoderModel>,
        gnn: GnnModel,
        compressed: CompressedGraph,
        rule: ConnectionRule,
        config: BTreeMap<String, String>,
    ) -> Result<Self> {
        let b = Self { format: BUNDLE_FORMAT.into(), version: BUNDLE_VERSION, task, encoder, gnn, compressed, rule, config };
        b.validate()?;
        Ok(b)
    }

    /// Checks the format tag and the dimensional chain
    /// encoder width = compressed width = GNN input width.
    pub fn validate(&self) -> Result<()> {
        let bad = |d: String| Err(Error::BundleIntegrity(d));
        if self.format != BUNDLE_FORMAT || self.version != BUNDLE_VERSION {
            return bad(format!("unsupported bundle {} v{}", self.format, self.version));
        }
        self.gnn.validate()?;
        self.compressed.validate()?;
        self.rule.validate()?;
        let d = self.compressed.dim();
        if self.gnn.input_dim != d {
            return bad(format!("GNN expects width {} but compressed nodes have {d}", self.gnn.input_dim));
        }
        if let Some(e) = &self.encoder {
            if e.hidden() != d {
                return bad(format!("encoder emits width {} but compressed nodes have {d}", e.hidden()));
            }
        }
        if self.gnn.task != self.task || self.compressed.task != self.task {
            return bad("task kinds disagree across bundle parts".into());
        }
        if self.compressed.k == 0 {
            return bad("bundle has no compressed nodes".into());
        }
        Ok(())
    }

    /// Bytes held by model weights and the compressed graph.
    pub fn byte_size(&self) -> usize {
        let enc = self.encoder.as_ref().map_or(0, |e| e.params().iter().map(|m| m.byte_size()).sum());
        enc + self.gnn.byte_size() + self.compressed.byte_size()
    }
}

/// A query: a raw record for the bundled encoder, or its embedding.
#[derive(Clone, Copy, Debug)]
pub enum Query<'a> {
    Record(&'a SequenceRecord),
    Embedding { id: &'a str, values: &'a [f64] },
}

impl Query<'_> {
    pub fn id(&self) -> &str {
        match self {
            Query::Record(r) => &r.id,
            Query::Embedding { id, .. } => id,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub encode_s: f64,
    pub connect_s: f64,
    pub gnn_s: f64,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.encode_s + self.connect_s + self.gnn_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: String,
    pub prediction: Prediction,
    /// Positive-class probability or regression value.
    pub score: f64,
    /// Compressed nodes the query was linked to.
    pub links: Vec<usize>,
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchScore {
    pub results: Vec<Scored>,
    pub mean_latency_s: f64,
    pub p99_latency_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub compressed_node: usize,
    /// Original sequence standing for the compressed node.
    pub representative_id: String,
    pub similarity: f64,
    /// Whether the query was linked to this node.
    pub connected: bool,
}

/// A validated bundle with precomputed similarity rows. Read-only; safe to
/// share across threads.
#[derive(Debug)]
pub struct Scorer {
    bundle: DeployBundle,
    prepared: Matrix,
    degrees: Vec<f64>,
}

impl Scorer {
    pub fn new(bundle: DeployBundle) -> Result<Self> {
        bundle.validate()?;
        let prepared = prepare_rows(&bundle.compressed.features, bundle.rule.metric);
        let degrees = compressed_degrees(&bundle.compressed);
        Ok(Self { bundle, prepared, degrees })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text).map_err(|e| Error::BundleIntegrity(e.to_string()))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn bundle(&self) -> &DeployBundle {
        &self.bundle
    }

    fn embed(&self, query: Query<'_>) -> Result<Matrix> {
        let d = self.bundle.compressed.dim();
        match query {
            Query::Record(r) => {
                let enc = self.bundle.encoder.as_ref().ok_or_else(|| {
                    Error::Precondition("bundle has no encoder; pass precomputed embeddings".into())
                })?;
                Matrix::from_vec(1, d, enc.encode_sequence(r)?)
            }
            Query::Embedding { values, .. } => {
                if values.len() != d {
                    return Err(Error::BundleIntegrity(format!("embedding width {} but bundle expects {d}", values.len())));
                }
                Matrix::from_vec(1, d, values.to_vec())
            }
        }
    }

    fn similarities(&self, h: &Matrix) -> Result<Matrix> {
        prepared_similarities(&prepare_rows(h, self.bundle.rule.metric), &self.prepared)
    }

    pub fn score(&self, query: Query<'_>) -> Result<Scored> {
        let t0 = Instant::now();
        let h = self.embed(query)?;
        let t1 = Instant::now();
        let links = links_from_similarities(&self.similarities(&h)?, &self.bundle.rule);
        let t2 = Instant::now();
        let view = MessagePassingView::attached(&self.bundle.compressed.features, &self.degrees, &h, &links)?;
        let out = self.bundle.gnn.predict_view(&view)?;
        let t3 = Instant::now();
        let prediction = Prediction::from_row(self.bundle.task, out.row(0));
        Ok(Scored {
            id: query.id().to_string(),
            score: prediction.score(),
            prediction,
            links: links.into_iter().next().unwrap_or_default(),
            timing: Timing {
                encode_s: (t1 - t0).as_secs_f64(),
                connect_s: (t2 - t1).as_secs_f64(),
                gnn_s: (t3 - t2).as_secs_f64(),
            },
        })
    }

    /// Scores each query independently; result `i` equals `score(queries[i])`.
    pub fn score_batch(&self, queries: &[Query<'_>]) -> Result<BatchScore> {
        let mut results = Vec::with_capacity(queries.len());
        for q in queries {
            let s = self.score(*q).map_err(|e| Error::Record { id: q.id().to_string(), source: Box::new(e) })?;
            results.push(s);
        }
        let mut lat: Vec<f64> = results.iter().map(|r| r.timing.total()).collect();
        let mean = if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 };
        lat.sort_by(f64::total_cmp);
        let p99 = if lat.is_empty() { 0.0 } else { lat[((lat.len() as f64 * 0.99).ceil() as usize).max(1) - 1] };
        Ok(BatchScore { results, mean_latency_s: mean, p99_latency_s: p99 })
    }

    /// Compressed nodes ranked by similarity to the query, ties to the lower
    /// index; `top_r` is clamped to K.
    pub fn explain(&self, query: Query<'_>, top_r: usize) -> Result<Vec<Explanation>> {
        if top_r == 0 {
            return Err(Error::Parameter("top_r must be at least 1".into()));
        }
        let h = self.embed(query)?;
        let sims = self.similarities(&h)?;
        let links = links_from_similarities(&sims, &self.bundle.rule).swap_remove(0);
        let row = sims.row(0);
        top_k(row, top_r.min(self.bundle.compressed.k), None)
            .into_iter()
            .map(|j| {
                Ok(Explanation {
                    compressed_node: j,
                    representative_id: self.bundle.compressed.trace_representatives(j)?.medoid_id,
                    similarity: row[j],
                    connected: links.binary_search(&j).is_ok(),
                })
            })
            .collect()
    }
}
