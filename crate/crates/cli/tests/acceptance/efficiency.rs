use std::time::Instant;

use seqgraph::encoder::{EmbeddingSet, EncoderModel, SequenceDataset, SequenceRecord};
use seqgraph::inference::{Query, Scorer};
use seqgraph::pipeline::{
    bundle_step, compress_step, embed_step, evaluate, finetune_step, train_encoder_step, train_gnn_step, PipelineConfig,
};
use seqgraph::synth::{generate, synthetic_embeddings, EmbeddingConfig, GeneratorConfig};

use crate::Verdict;

const BUDGET_S: f64 = 120.0;
const LATENCY_S: f64 = 1e-3;
const TEST_QUERIES: usize = 1000;

fn split(set: &EmbeddingSet, range: std::ops::Range<usize>) -> EmbeddingSet {
    let idx: Vec<usize> = range.collect();
    EmbeddingSet::new(
        idx.iter().map(|&i| set.ids[i].clone()).collect(),
        set.features.select_rows(&idx).unwrap(),
        idx.iter().map(|&i| set.labels[i]).collect(),
    )
    .unwrap()
}

/// 100k precomputed 256-wide embeddings: compression at K=500 plus 50
/// epochs of GNN training within budget, then per-sample latency.
pub fn budget() -> Verdict {
    let n = 100_000;
    let pool = match synthetic_embeddings(&EmbeddingConfig { n: n + TEST_QUERIES, dim: 256, seed: 5, ..EmbeddingConfig::default() }) {
        Ok(p) => p,
        Err(e) => return Verdict::fail(format!("embedding generator: {e}")),
    };
    let train = split(&pool, 0..n);
    let test = split(&pool, n..n + TEST_QUERIES);
    drop(pool);
    let cfg = PipelineConfig { k: 500, gnn_epochs: 50, ..PipelineConfig::fraud() };
    let result = (|| -> seqgraph::Result<(f64, f64, f64)> {
        let t = Instant::now();
        let graph = compress_step(&cfg, &train)?;
        let compress_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (gnn, _) = train_gnn_step(&cfg, &graph)?;
        let train_s = t.elapsed().as_secs_f64();
        let scorer = Scorer::new(bundle_step(&cfg, None, gnn, graph)?)?;
        Ok((compress_s, train_s, evaluate(&scorer, &test)?.report.mean_latency_s))
    })();
    let (compress_s, train_s, latency) = match result {
        Ok(v) => v,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let total = compress_s + train_s;
    Verdict::new(
        total <= BUDGET_S && latency <= LATENCY_S,
        format!(
            "N={n} F_s=256 K=500: compression {compress_s:.1}s + 50-epoch GNN training {train_s:.1}s = {total:.1}s \
             (budget {BUDGET_S:.0}s); mean latency {latency:.2e} s/sample over {TEST_QUERIES} queries (limit {LATENCY_S:.0e})"
        ),
    )
}

struct Latency {
    /// Raw sequence through the bundled encoder, linking and GNN.
    end_to_end: f64,
    /// Precomputed embedding: linking and GNN only.
    graph_only: f64,
}

fn mean_latency(scorer: &Scorer, queries: &[Query<'_>]) -> seqgraph::Result<f64> {
    // One warm-up pass so both pipelines start from warm caches.
    scorer.score_batch(&queries[..queries.len().min(50)])?;
    Ok(scorer.score_batch(queries)?.mean_latency_s)
}

fn pipeline_latency(
    cfg: &PipelineConfig,
    encoder: &EncoderModel,
    train: EmbeddingSet,
    test_records: &[SequenceRecord],
    test: &EmbeddingSet,
) -> seqgraph::Result<Latency> {
    let graph = compress_step(cfg, &train)?;
    let (gnn, _) = train_gnn_step(cfg, &graph)?;
    let (gnn, _) = finetune_step(cfg, gnn, &graph, &train)?;
    drop(train);
    let scorer = Scorer::new(bundle_step(cfg, Some(encoder.clone()), gnn, graph)?)?;
    let raw: Vec<Query<'_>> = test_records.iter().map(Query::Record).collect();
    let emb: Vec<Query<'_>> =
        test.ids.iter().zip(test.features.iter_rows()).map(|(id, values)| Query::Embedding { id, values }).collect();
    Ok(Latency { end_to_end: mean_latency(&scorer, &raw)?, graph_only: mean_latency(&scorer, &emb)? })
}

fn ratio(a: f64, b: f64) -> f64 {
    a.max(b) / a.min(b)
}

/// Pipelines from 10³ and 10⁵ training sequences share the encoder and K;
/// only N differs.
pub fn n_independence() -> Verdict {
    let result = (|| -> seqgraph::Result<(Latency, Latency, f64)> {
        let splits = generate(&GeneratorConfig { n_sequences: 150_000, seed: 6, ..GeneratorConfig::default() })?;
        // Both N = 10³ and N = 10⁵ need K = 500 clusters with a feasible positive
        // share at a 10% positive rate; 0.3 would need 150 positives out of ~100.
        let cfg = PipelineConfig {
            k: 500,
            pos_ratio: 0.1,
            encoder_lr: 1e-3,
            encoder_epochs: 2,
            patience: 1,
            finetune_epochs: 1,
            seed: 6,
            ..PipelineConfig::fraud()
        };
        let head = |d: &SequenceDataset, n: usize| SequenceDataset::new(d.records()[..n].to_vec());
        let small_train = head(&splits.train, 1_000)?;
        let (encoder, _) = train_encoder_step(&cfg, &small_train, &head(&splits.val, 1_000)?)?;
        let test_records = splits.test.records()[..TEST_QUERIES].to_vec();
        let test = embed_step(&encoder, &SequenceDataset::new(test_records.clone())?)?;
        let t = Instant::now();
        let large_train = embed_step(&encoder, &splits.train)?;
        let embed_s = t.elapsed().as_secs_f64();
        drop(splits);
        let small = pipeline_latency(&cfg, &encoder, embed_step(&encoder, &small_train)?, &test_records, &test)?;
        let large = pipeline_latency(&cfg, &encoder, large_train, &test_records, &test)?;
        Ok((small, large, embed_s))
    })();
    let (small, large, embed_s) = match result {
        Ok(v) => v,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let r_full = ratio(small.end_to_end, large.end_to_end);
    let r_graph = ratio(small.graph_only, large.graph_only);
    Verdict::new(
        r_full < 2.0 && r_graph < 2.0,
        format!(
            "K=500: end-to-end {:.2e} s (N=1e3) vs {:.2e} s (N=1e5), ratio {r_full:.2}; graph-only {:.2e} vs {:.2e}, \
             ratio {r_graph:.2} (limit 2); embedding 1e5 training sequences took {embed_s:.1}s",
            small.end_to_end, large.end_to_end, small.graph_only, large.graph_only
        ),
    )
}
