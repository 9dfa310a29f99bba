use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use seqgraph::compress::CompressionMode;
use seqgraph::encoder::{SequenceDataset, SequenceRecord};
use seqgraph::gnn::compressed_objective;
use seqgraph::inference::{Query, Scorer};
use seqgraph::layers::LossKind;
use seqgraph::pipeline::{compress_step, finetune_step, run_training, train_gnn_step, EvalReport, PipelineConfig};
use seqgraph::synth::{generate, synthetic_embeddings, EmbeddingConfig, GeneratorConfig};
use seqgraph_cli::commands::{self, Common, DataArgs, EncoderChoice};

use crate::Verdict;

/// Training on each compressed-label branch; returns the objective, the
/// count of non-one-hot Ỹ rows and the last losses.
fn branch(per_class: bool) -> seqgraph::Result<(LossKind, usize, f64, f64)> {
    let nodes = synthetic_embeddings(&EmbeddingConfig { n: 3000, dim: 16, clusters: 60, seed: 8, ..EmbeddingConfig::default() })?;
    let cfg = PipelineConfig { k: 100, per_class, gnn_epochs: 30, finetune_epochs: 2, seed: 8, ..PipelineConfig::fraud() };
    let graph = compress_step(&cfg, &nodes)?;
    let mixed = graph.labels.iter_rows().filter(|r| !r.iter().all(|&v| v == 0.0 || v == 1.0)).count();
    let (gnn, report) = train_gnn_step(&cfg, &graph)?;
    if report.loss_kind != compressed_objective(&graph) {
        return Err(seqgraph::Error::Numeric("trainer used a different objective than the graph selects".into()));
    }
    let last = *report.loss_trace.last().unwrap_or(&f64::NAN);
    if report.loss_trace.iter().any(|l| !l.is_finite()) {
        return Err(seqgraph::Error::Numeric(format!("non-finite compressed loss in {:?}", report.loss_trace)));
    }
    let (_, ft) = finetune_step(&cfg, gnn, &graph, &nodes)?;
    let ft_last = *ft.loss_trace.last().unwrap_or(&f64::NAN);
    Ok((report.loss_kind, mixed, last, ft_last))
}

pub fn objective_branches() -> Verdict {
    let pooled = branch(false);
    let balanced = branch(true);
    match (pooled, balanced) {
        (Ok((pk, pm, pl, pf)), Ok((bk, bm, bl, bf))) => Verdict::new(
            pk == LossKind::MeanSquared && pm > 0 && bk == LossKind::CrossEntropy && bm == 0 && [pl, pf, bl, bf].iter().all(|v| v.is_finite()),
            format!(
                "single-pool: {pk:?} with {pm} mixed-label nodes, final loss {pl:.4}, finetune {pf:.4}; \
                 per-class: {bk:?} with {bm} mixed, final loss {bl:.4}, finetune {bf:.4}"
            ),
        ),
        (p, b) => Verdict::fail(format!(
            "single-pool: {}; per-class: {}",
            p.map_or_else(|e| e.to_string(), |_| "ok".into()),
            b.map_or_else(|e| e.to_string(), |_| "ok".into())
        )),
    }
}

const ARTIFACTS: &[&str] = &[
    "encoder.json",
    "train_embeddings.csv",
    "val_embeddings.csv",
    "test_embeddings.csv",
    "compressed.json",
    "gnn.json",
    "bundle.json",
];

fn overrides() -> Vec<String> {
    ["k=40", "hidden=32", "encoder_lr=0.001", "encoder_epochs=3", "patience=1", "gnn_epochs=20", "finetune_epochs=2"]
        .map(String::from)
        .to_vec()
}

/// Wall-clock latency differs between runs; everything else must not.
fn without_latency(mut r: EvalReport) -> EvalReport {
    r.mean_latency_s = 0.0;
    r.p99_latency_s = 0.0;
    r
}

fn determinism_run(root: &Path) -> anyhow::Result<Vec<String>> {
    let data_dir = root.join("data");
    commands::gen_synth(&data_dir, Some(4), false, &["n_sequences=1200".into(), "n_archetypes=30".into()])?;
    let data = DataArgs { data: Some(data_dir), demand_csv: None };
    let common = |name: &str| Common { out_dir: root.join(name), seed: Some(4), overrides: overrides(), ..Common::default() };
    let a = without_latency(commands::run_all(&common("a"), &data)?);
    let b = without_latency(commands::run_all(&common("b"), &data)?);
    let s = common("steps");
    commands::train_encoder(&s, &data)?;
    commands::embed(&s, &data, None)?;
    commands::compress(&s, None)?;
    commands::train_gnn(&s, None)?;
    commands::finetune(&s, None, None, None, EncoderChoice::Default)?;
    let steps = without_latency(commands::eval(&s.out_dir, None, None)?);

    let mut diffs = Vec::new();
    for (other, report) in [("b", &b), ("steps", &steps)] {
        for name in ARTIFACTS {
            if std::fs::read(root.join("a").join(name))? != std::fs::read(root.join(other).join(name))? {
                diffs.push(format!("{name} (a vs {other})"));
            }
        }
        if &a != report {
            diffs.push(format!("eval.json quality (a vs {other})"));
        }
    }
    Ok(diffs)
}

pub fn determinism() -> Verdict {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return Verdict::fail(format!("temp dir: {e}")),
    };
    match determinism_run(tmp.path()) {
        Ok(diffs) if diffs.is_empty() => Verdict::new(
            true,
            format!("run-all twice and step-wise agree byte-for-byte on {} artifacts; eval quality identical", ARTIFACTS.len()),
        ),
        Ok(diffs) => Verdict::fail(format!("differences: {}", diffs.join(", "))),
        Err(e) => Verdict::fail(format!("{e:#}")),
    }
}

struct ExplainStats {
    queries: usize,
    duplicates: usize,
    duplicates_first: usize,
    problems: Vec<String>,
}

/// Explanation provenance and ranking for every test query, plus duplicate
/// queries of each cluster's representative sequence.
fn explain_mode(mode: CompressionMode, train: &SequenceDataset, val: &SequenceDataset, test: &SequenceDataset) -> seqgraph::Result<ExplainStats> {
    let cfg = PipelineConfig {
        mode,
        k: 40,
        hidden: 32,
        encoder_lr: 1e-3,
        encoder_epochs: 3,
        patience: 1,
        gnn_epochs: 20,
        finetune_epochs: 2,
        seed: 9,
        ..PipelineConfig::fraud()
    };
    let run = run_training(&cfg, train, val)?;
    let scorer = Scorer::new(run.bundle)?;
    let graph = &scorer.bundle().compressed;
    let k = graph.k;
    let train_ids: BTreeSet<&str> = train.records().iter().map(|r| r.id.as_str()).collect();
    let by_id: BTreeMap<&str, &SequenceRecord> = train.records().iter().map(|r| (r.id.as_str(), r)).collect();
    let mut problems = Vec::new();
    let mut problem = |s: String| {
        if problems.len() < 3 {
            problems.push(s);
        }
    };

    for r in test.records() {
        let ex = scorer.explain(Query::Record(r), k)?;
        if ex.len() != k {
            problem(format!("{}: {} explanations for K = {k}", r.id, ex.len()));
        }
        for e in &ex {
            let j = e.compressed_node;
            let traced = graph.trace_representatives(j)?;
            if e.representative_id != traced.medoid_id
                || !train_ids.contains(e.representative_id.as_str())
                || !traced.member_ids.contains(&e.representative_id)
                || traced.member_ids.iter().any(|m| !train_ids.contains(m.as_str()))
            {
                problem(format!("{}: node {j} representative {} does not resolve", r.id, e.representative_id));
            }
        }
        if ex.windows(2).any(|w| w[1].similarity > w[0].similarity) {
            problem(format!("{}: similarities increase down the ranking", r.id));
        }
    }

    let mut first = 0;
    for j in 0..k {
        let rep = graph.trace_representatives(j)?.medoid_id;
        let mut dup = by_id[rep.as_str()].clone();
        dup.id = format!("duplicate-of-{rep}");
        let ex = scorer.explain(Query::Record(&dup), k)?;
        let own = ex.iter().find(|e| e.compressed_node == j).map(|e| e.similarity).unwrap_or(f64::NEG_INFINITY);
        // Ties with an identical representative elsewhere still count as first.
        if ex[0].compressed_node == j || ex[0].similarity - own <= 1e-12 {
            first += 1;
        }
    }
    Ok(ExplainStats { queries: test.len(), duplicates: k, duplicates_first: first, problems })
}

pub fn explainability() -> Verdict {
    let splits = match generate(&GeneratorConfig { n_sequences: 1800, n_archetypes: 40, seed: 9, ..GeneratorConfig::default() }) {
        Ok(s) => s,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for mode in [CompressionMode::Medoid, CompressionMode::Centroid] {
        match explain_mode(mode, &splits.train, &splits.val, &splits.test) {
            Ok(s) => {
                // Only a medoid is the duplicated sequence's own embedding;
                // a centroid need not be its member's nearest.
                let dup_ok = mode == CompressionMode::Centroid || s.duplicates_first == s.duplicates;
                pass &= s.problems.is_empty() && dup_ok;
                let mut line = format!(
                    "{mode}: {} queries resolve and rank non-increasing; representative duplicates ranked own cluster first {}/{}",
                    s.queries, s.duplicates_first, s.duplicates
                );
                if mode == CompressionMode::Centroid {
                    line += " (informational)";
                }
                if !s.problems.is_empty() {
                    line += &format!(" [{}]", s.problems.join("; "));
                }
                lines.push(line);
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{mode}: {e}"));
            }
        }
    }
    Verdict::new(pass, lines.join("; "))
}
