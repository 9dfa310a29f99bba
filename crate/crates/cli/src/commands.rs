//! One function per subcommand. Stages exchange files in `--out-dir`, so any
//! stage can be rerun, or entered with externally produced inputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;

use seqgraph::bench::run_benchmark;
use seqgraph::compress::CompressedGraph;
use seqgraph::demand::{demand_sequences, read_demand_csv, write_demand};
use seqgraph::encoder::{read_records, EmbeddingSet, EncoderModel, SequenceDataset, SequenceRecord};
use seqgraph::gnn::GnnModel;
use seqgraph::graph::write_edges;
use seqgraph::inference::{Query, Scorer};
use seqgraph::pipeline::{
    build_graph_step, bundle_step, compress_step, embed_step, evaluate, finetune_step, train_encoder_step,
    train_gnn_step, EvalReport, PipelineConfig, Quality,
};
use seqgraph::synth::{generate, generate_demand, synthetic_embeddings, DemandConfig, EmbeddingConfig, GeneratorConfig};
use seqgraph::task::TaskKind;
use seqgraph::Error;

use crate::artifact::{self, write_atomic, write_atomic_with};
use crate::manifest::Recorder;

/// Fixed file names inside the output directory.
pub mod files {
    pub const ENCODER: &str = "encoder.json";
    pub const TRAIN_EMBEDDINGS: &str = "train_embeddings.csv";
    pub const VAL_EMBEDDINGS: &str = "val_embeddings.csv";
    pub const TEST_EMBEDDINGS: &str = "test_embeddings.csv";
    pub const GRAPH: &str = "graph_edges.csv";
    pub const COMPRESSED: &str = "compressed.json";
    pub const GNN: &str = "gnn.json";
    pub const BUNDLE: &str = "bundle.json";
    pub const SCORES: &str = "scores.jsonl";
    pub const EXPLANATIONS: &str = "explanations.jsonl";
    pub const EVAL: &str = "eval.json";
    pub const BENCH: &str = "bench.json";
    pub const DEMAND: &str = "demand.csv";
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Directory holding every stage's inputs and outputs.
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base profile: fraud or mobility.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Configuration overrides, applied after the profile and file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct DataArgs {
    /// Directory with train.jsonl, val.jsonl and test.jsonl.
    #[arg(long, conflicts_with = "demand_csv")]
    pub data: Option<PathBuf>,
    /// Hourly `station,hour,demand` table, windowed into sequences.
    #[arg(long)]
    pub demand_csv: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct QueryArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// JSONL sequence records; `-` or absent reads stdin.
    #[arg(long, conflicts_with = "embeddings")]
    pub input: Option<PathBuf>,
    /// Precomputed embeddings CSV; the bundled encoder is skipped.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output file; `-` writes to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Train the sequence encoder and its prediction head.
    TrainEncoder {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Write embeddings for every split.
    Embed {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
    /// Materialize the full relation graph over training embeddings.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Cluster training embeddings into the compressed graph.
    Compress {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train a GNN on the compressed graph alone.
    TrainGnn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        compressed: Option<PathBuf>,
    },
    /// Correlation fine-tuning; writes the deployment bundle.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gnn: Option<PathBuf>,
        #[arg(long)]
        compressed: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Encoder to bundle; defaults to the one in the output directory.
        #[arg(long, conflicts_with = "no_encoder")]
        encoder: Option<PathBuf>,
        /// Bundle without an encoder; queries must then be embeddings.
        #[arg(long)]
        no_encoder: bool,
    },
    /// Score sequences or embeddings against the bundle.
    Infer {
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Rank compressed nodes, with representative sequence ids, per query.
    Explain {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 5)]
        top_r: usize,
    },
    /// Test-set metrics for the bundle and its encoder head.
    Eval {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Timings and quality across compressed sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 500, 1000, 5000])]
        ks: Vec<usize>,
        #[arg(long)]
        train_embeddings: Option<PathBuf>,
        #[arg(long)]
        test_embeddings: Option<PathBuf>,
        /// Generate this many clustered training embeddings instead of
        /// reading files; a fifth as many again are held out for testing.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Encoder whose head is reported as the baseline row.
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
    /// Generate a synthetic sequence corpus, or a demand table.
    GenSynth {
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write an hourly demand CSV instead of sequence splits.
        #[arg(long)]
        demand: bool,
        /// Generator overrides.
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Every training stage in order, then evaluation.
    RunAll {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::TrainEncoder { common, data } => train_encoder(&common, &data),
        Command::Embed { common, data, encoder } => embed(&common, &data, encoder),
        Command::BuildGraph { common, embeddings } => build_graph(&common, embeddings),
        Command::Compress { common, embeddings } => compress(&common, embeddings),
        Command::TrainGnn { common, compressed } => train_gnn(&common, compressed),
        Command::Finetune { common, gnn, compressed, embeddings, encoder, no_encoder } => {
            let encoder = if no_encoder { EncoderChoice::None } else { encoder.map_or(EncoderChoice::Default, EncoderChoice::Path) };
            finetune(&common, gnn, compressed, embeddings, encoder)
        }
        Command::Infer { query } => infer(&query),
        Command::Explain { query, top_r } => explain(&query, top_r),
        Command::Eval { bundle, embeddings, out_dir } => eval(&out_dir, bundle, embeddings).map(|_| ()),
        Command::Bench { common, ks, train_embeddings, test_embeddings, synthetic, encoder } => {
            bench(&common, &ks, train_embeddings, test_embeddings, synthetic, encoder)
        }
        Command::GenSynth { out_dir, seed, demand, overrides } => gen_synth(&out_dir, seed, demand, &overrides),
        Command::RunAll { common, data } => run_all(&common, &data).map(|_| ()),
    }
}

fn split_override(raw: &str) -> Result<(&str, &str), Error> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{raw}`")))
}

/// Profile, then config file, then `KEY=VALUE` overrides, then `--seed`.
pub fn resolve_config(common: &Common, default_profile: &str) -> Result<PipelineConfig, Error> {
    let profile = common.profile.as_deref().unwrap_or(default_profile);
    let mut text = format!("profile = {profile}\n");
    if let Some(path) = &common.config {
        let file = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        text.push_str(&file);
    }
    let mut cfg = PipelineConfig::parse(&text)?;
    for raw in &common.overrides {
        let (key, value) = split_override(raw)?;
        if key == "profile" {
            return Err(Error::Config("select the profile with --profile".into()));
        }
        cfg.set(key, value)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl DataArgs {
    fn default_profile(&self) -> &'static str {
        if self.demand_csv.is_some() {
            "mobility"
        } else {
            "fraud"
        }
    }

    /// Train, validation and test sequences, recording every file read.
    fn load(&self, cfg: &PipelineConfig, rec: &mut Recorder) -> Result<[SequenceDataset; 3]> {
        if let Some(csv) = &self.demand_csv {
            artifact::require(csv, "gen-synth")?;
            rec.input(csv)?;
            let rows = read_demand_csv(csv)?;
            let s = demand_sequences(&rows, cfg.window)?;
            return Ok([s.train, s.val, s.test]);
        }
        let dir = self
            .data
            .as_deref()
            .ok_or_else(|| Error::Config("pass --data <dir> or --demand-csv <file>".into()))?;
        let mut out = Vec::with_capacity(3);
        for split in ["train", "val", "test"] {
            let path = dir.join(format!("{split}.jsonl"));
            artifact::require(&path, "gen-synth")?;
            rec.input(&path)?;
            out.push(SequenceDataset::read_jsonl(&path)?);
        }
        Ok(out.try_into().expect("three splits"))
    }
}

fn or_default(path: Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    path.unwrap_or_else(|| dir.join(name))
}

fn load_embeddings(path: &Path, rec: &mut Recorder) -> Result<EmbeddingSet> {
    artifact::require(path, "embed")?;
    rec.input(path)?;
    EmbeddingSet::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn load_env<T: serde::de::DeserializeOwned>(path: &Path, producer: &'static str, rec: &mut Recorder) -> Result<T> {
    let env = artifact::load(path, producer)?;
    rec.input(path)?;
    Ok(env.payload)
}

fn save_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    write_atomic_with(path, |w| set.write_to(w).map_err(std::io::Error::other))?;
    Ok(())
}

fn save_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn train_encoder(common: &Common, data: &DataArgs) -> Result<()> {
    let cfg = resolve_config(common, data.default_profile())?;
    let mut rec = Recorder::new("train-encoder", cfg.seed, cfg.to_map());
    let [train, val, _] = data.load(&cfg, &mut rec)?;
    let (model, report) = rec.time("train", || train_encoder_step(&cfg, &train, &val))?;
    let path = common.out_dir.join(files::ENCODER);
    artifact::save(&path, "train-encoder", &cfg.to_map(), &model)?;
    rec.output(&path);
    rec.summary(serde_json::to_value(&report)?);
    rec.finish(&common.out_dir)?;
    Ok(())
}

pub fn embed(common: &Common, data: &DataArgs, encoder: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(common, data.default_profile())?;
    let mut rec = Recorder::new("embed", cfg.seed, cfg.to_map());
    let enc_path = or_default(encoder, &common.out_dir, files::ENCODER);
    let model: EncoderModel = load_env(&enc_path, "train-encoder", &mut rec)?;
    let splits = data.load(&cfg, &mut rec)?;
    let names = [files::TRAIN_EMBEDDINGS, files::VAL_EMBEDDINGS, files::TEST_EMBEDDINGS];
    for (ds, name) in splits.iter().zip(names) {
        let set = rec.time(name, || embed_step(&model, ds))?;
        let path = common.out_dir.join(name);
        save_embeddings(&path, &set)?;
        rec.output(&path);
    }
    rec.finish(&common.out_dir)?;
    Ok(())
}

pub fn build_graph(common: &Common, embeddings: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(common, "fraud")?;
    let mut rec = Recorder::new("build-graph", cfg.seed, cfg.to_map());
    let nodes = load_embeddings(&or_default(embeddings, &common.out_dir, files::TRAIN_EMBEDDINGS), &mut rec)?;
    let graph = rec.time("build", || build_graph_step(&cfg, &nodes))?;
    let path = common.out_dir.join(files::GRAPH);
    write_atomic_with(&path, |w| write_edges(graph.edges(), w).map_err(std::io::Error::other))?;
    rec.output(&path);
    rec.summary(json!({"nodes": graph.node_count(), "edges": graph.edges().len()}));
    rec.finish(&common.out_dir)?;
    Ok(())
}

pub fn compress(common: &Common, embeddings: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(common, "fraud")?;
    let mut rec = Recorder::new("compress", cfg.seed, cfg.to_map());
    let nodes = load_embeddings(&or_default(embeddings, &common.out_dir, files::TRAIN_EMBEDDINGS), &mut rec)?;
    let graph = rec.time("compress", || compress_step(&cfg, &nodes))?;
    let path = common.out_dir.join(files::COMPRESSED);
    artifact::save(&path, "compress", &cfg.to_map(), &graph)?;
    rec.output(&path);
    rec.summary(json!({"n": nodes.len(), "k": graph.k, "edges": graph.edges.len(), "one_hot": graph.one_hot}));
    rec.finish(&common.out_dir)?;
    Ok(())
}

pub fn train_gnn(common: &Common, compressed: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(common, "fraud")?;
    let mut rec = Recorder::new("train-gnn", cfg.seed, cfg.to_map());
    let graph: CompressedGraph = load_env(&or_default(compressed, &common.out_dir, files::COMPRESSED), "compress", &mut rec)?;
    let (model, report) = rec.time("train", || train_gnn_step(&cfg, &graph))?;
    let path = common.out_dir.join(files::GNN);
    artifact::save(&path, "train-gnn", &cfg.to_map(), &model)?;
    rec.output(&path);
    rec.summary(serde_json::to_value(&report)?);
    rec.finish(&common.out_dir)?;
    Ok(())
}

pub enum EncoderChoice {
    /// The output directory's encoder, if there is one.
    Default,
    Path(PathBuf),
    None,
}

pub fn finetune(
    common: &Common,
    gnn: Option<PathBuf>,
    compressed: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    encoder: EncoderChoice,
) -> Result<()> {
    let cfg = resolve_config(common, "fraud")?;
    let dir = &common.out_dir;
    let mut rec = Recorder::new("finetune", cfg.seed, cfg.to_map());
    let model: GnnModel = load_env(&or_default(gnn, dir, files::GNN), "train-gnn", &mut rec)?;
    let graph: CompressedGraph = load_env(&or_default(compressed, dir, files::COMPRESSED), "compress", &mut rec)?;
    let nodes = load_embeddings(&or_default(embeddings, dir, files::TRAIN_EMBEDDINGS), &mut rec)?;
    if nodes.dim() != graph.dim() || model.input_dim != graph.dim() {
        return Err(Error::BundleIntegrity(format!(
            "widths disagree: embeddings {}, compressed graph {}, GNN input {}",
            nodes.dim(),
            graph.dim(),
            model.input_dim
        ))
        .into());
    }
    let enc_path = match encoder {
        EncoderChoice::Path(p) => Some(p),
        EncoderChoice::Default => Some(dir.join(files::ENCODER)).filter(|p| p.is_file()),
        EncoderChoice::None => None,
    };
    let enc: Option<EncoderModel> = match enc_path {
        Some(p) => Some(load_env(&p, "train-encoder", &mut rec)?),
        None => None,
    };
    let (model, report) = rec.time("finetune", || finetune_step(&cfg, model, &graph, &nodes))?;
    let bundle = bundle_step(&cfg, enc, model, graph)?;
    let path = dir.join(files::BUNDLE);
    save_json_pretty(&path, &bundle)?;
    rec.output(&path);
    rec.summary(serde_json::to_value(&report)?);
    rec.finish(dir)?;
    Ok(())
}

/// Parsed queries, owning their data.
enum Queries {
    Records(Vec<SequenceRecord>),
    Embeddings(EmbeddingSet),
}

impl Queries {
    fn load(args: &QueryArgs, rec: &mut Recorder) -> Result<Self> {
        if let Some(p) = &args.embeddings {
            return Ok(Queries::Embeddings(load_embeddings(p, rec)?));
        }
        let records = match args.input.as_deref() {
            Some(p) if p != Path::new("-") => {
                artifact::require(p, "gen-synth")?;
                rec.input(p)?;
                read_records(std::io::BufReader::new(std::fs::File::open(p)?))?
            }
            _ => read_records(std::io::stdin().lock())?,
        };
        if records.is_empty() {
            return Err(Error::EmptyInput("no query records".into()).into());
        }
        Ok(Queries::Records(records))
    }

    fn as_queries(&self) -> Vec<Query<'_>> {
        match self {
            Queries::Records(rs) => rs.iter().map(Query::Record).collect(),
            Queries::Embeddings(set) => set
                .ids
                .iter()
                .zip(set.features.iter_rows())
                .map(|(id, values)| Query::Embedding { id, values })
                .collect(),
        }
    }
}

fn load_scorer(path: &Path, rec: &mut Recorder) -> Result<Scorer> {
    artifact::require(path, "finetune")?;
    let scorer = Scorer::load(path)?;
    rec.input(path)?;
    Ok(scorer)
}

fn emit_lines(args: &QueryArgs, default_name: &str, text: String, rec: &mut Recorder) -> Result<()> {
    match args.output.as_deref() {
        Some(p) if p == Path::new("-") => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        other => {
            let path = other.map_or_else(|| args.out_dir.join(default_name), Path::to_path_buf);
            write_atomic(&path, text.as_bytes())?;
            rec.output(&path);
        }
    }
    Ok(())
}

fn query_recorder(command: &str, args: &QueryArgs) -> Result<(Recorder, Scorer)> {
    let path = args.bundle.clone().unwrap_or_else(|| args.out_dir.join(files::BUNDLE));
    let mut probe = Recorder::new(command, 0, BTreeMap::new());
    let scorer = load_scorer(&path, &mut probe)?;
    let config = scorer.bundle().config.clone();
    let seed = config.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut rec = Recorder::new(command, seed, config);
    rec.input(&path)?;
    Ok((rec, scorer))
}

pub fn infer(args: &QueryArgs) -> Result<()> {
    let (mut rec, scorer) = query_recorder("infer", args)?;
    let queries = Queries::load(args, &mut rec)?;
    let batch = rec.time("score", || scorer.score_batch(&queries.as_queries()))?;
    let mut text = String::new();
    for r in &batch.results {
        text.push_str(&serde_json::to_string(&json!({"id": r.id, "score": r.score, "latency_s": r.timing.total()}))?);
        text.push('\n');
    }
    emit_lines(args, files::SCORES, text, &mut rec)?;
    rec.summary(json!({"queries": batch.results.len(), "mean_latency_s": batch.mean_latency_s, "p99_latency_s": batch.p99_latency_s}));
    rec.finish(&args.out_dir)?;
    Ok(())
}

pub fn explain(args: &QueryArgs, top_r: usize) -> Result<()> {
    let (mut rec, scorer) = query_recorder("explain", args)?;
    let queries = Queries::load(args, &mut rec)?;
    let mut text = String::new();
    for q in queries.as_queries() {
        let ranked = scorer
            .explain(q, top_r)
            .map_err(|e| Error::Record { id: q.id().to_string(), source: Box::new(e) })?;
        text.push_str(&serde_json::to_string(&json!({"id": q.id(), "explanations": ranked}))?);
        text.push('\n');
    }
    emit_lines(args, files::EXPLANATIONS, text, &mut rec)?;
    rec.finish(&args.out_dir)?;
    Ok(())
}

fn metric_names(task: TaskKind) -> (&'static str, &'static str) {
    match task {
        TaskKind::Classification => ("AUPRC", "R@P0.9"),
        TaskKind::Regression => ("RMSE", "sMAPE"),
    }
}

pub fn eval_table(report: &EvalReport) -> String {
    let (m1, m2) = metric_names(report.task);
    let mut out = format!(
        "{} test samples, K = {}\n{:<14} {:>9} {:>9}\n",
        report.samples, report.compressed_nodes, "model", m1, m2
    );
    let mut line = |name: &str, q: &Quality| {
        out.push_str(&format!("{name:<14} {:>9.4} {:>9.4}\n", q.primary(), q.secondary()));
    };
    line("graph model", &report.graph_model);
    if let Some(q) = &report.encoder_only {
        line("encoder only", q);
    }
    out.push_str(&format!(
        "latency: mean {:.3e} s/sample, p99 {:.3e} s\n",
        report.mean_latency_s, report.p99_latency_s
    ));
    out
}

pub fn eval(out_dir: &Path, bundle: Option<PathBuf>, embeddings: Option<PathBuf>) -> Result<EvalReport> {
    let args = QueryArgs {
        bundle,
        out_dir: out_dir.to_path_buf(),
        ..Default::default()
    };
    let (mut rec, scorer) = query_recorder("eval", &args)?;
    let test = load_embeddings(&or_default(embeddings, out_dir, files::TEST_EMBEDDINGS), &mut rec)?;
    let evaluation = rec.time("evaluate", || evaluate(&scorer, &test))?;
    let report = evaluation.report;
    let path = out_dir.join(files::EVAL);
    save_json_pretty(&path, &report)?;
    rec.output(&path);
    print!("{}", eval_table(&report));
    rec.finish(out_dir)?;
    Ok(report)
}

/// Splits one generated pool so train and test share cluster centres.
fn synthetic_pair(n: usize, dim: usize, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let n_test = (n / 5).max(1);
    let all = synthetic_embeddings(&EmbeddingConfig {
        n: n + n_test,
        dim,
        seed,
        ..Default::default()
    })?;
    let part = |range: std::ops::Range<usize>| -> Result<EmbeddingSet> {
        let idx: Vec<usize> = range.collect();
        Ok(EmbeddingSet::new(
            idx.iter().map(|&i| all.ids[i].clone()).collect(),
            all.features.select_rows(&idx)?,
            idx.iter().map(|&i| all.labels[i]).collect(),
        )?)
    };
    Ok((part(0..n)?, part(n..n + n_test)?))
}

pub fn bench(
    common: &Common,
    ks: &[usize],
    train_embeddings: Option<PathBuf>,
    test_embeddings: Option<PathBuf>,
    synthetic: Option<usize>,
    encoder: Option<PathBuf>,
) -> Result<()> {
    let cfg = resolve_config(common, "fraud")?;
    let dir = &common.out_dir;
    let mut rec = Recorder::new("bench", cfg.seed, cfg.to_map());
    let (train, test) = match synthetic {
        Some(n) => synthetic_pair(n, cfg.hidden, cfg.seed)?,
        None => (
            load_embeddings(&or_default(train_embeddings, dir, files::TRAIN_EMBEDDINGS), &mut rec)?,
            load_embeddings(&or_default(test_embeddings, dir, files::TEST_EMBEDDINGS), &mut rec)?,
        ),
    };
    let enc: Option<EncoderModel> = match encoder {
        Some(p) => Some(load_env(&p, "train-encoder", &mut rec)?),
        None => None,
    };
    let report = rec.time("bench", || run_benchmark(&cfg, &train, &test, ks, enc.as_ref()))?;
    let path = dir.join(files::BENCH);
    save_json_pretty(&path, &report)?;
    rec.output(&path);
    print!("{}", report.to_table());
    rec.finish(dir)?;
    Ok(())
}

/// Applies `KEY=VALUE` pairs to any serializable struct by field name.
fn apply_overrides<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, overrides: &[String]) -> Result<T, Error> {
    let serde_json::Value::Object(mut obj) = serde_json::to_value(&base)? else {
        unreachable!("generator configs are structs")
    };
    for raw in overrides {
        let (key, value) = split_override(raw)?;
        if !obj.contains_key(key) {
            return Err(Error::Config(format!("unknown generator key `{key}`")));
        }
        let parsed = serde_json::from_str(value).map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))?;
        obj.insert(key.to_string(), parsed);
    }
    serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))
}

pub fn gen_synth(out_dir: &Path, seed: Option<u64>, demand: bool, overrides: &[String]) -> Result<()> {
    if demand {
        let mut cfg = apply_overrides(DemandConfig::default(), overrides)?;
        cfg.seed = seed.unwrap_or(cfg.seed);
        let mut rec = Recorder::new("gen-synth", cfg.seed, flat_map(&cfg)?);
        let rows = rec.time("generate", || generate_demand(&cfg))?;
        let path = out_dir.join(files::DEMAND);
        write_atomic_with(&path, |w| write_demand(&rows, w).map_err(std::io::Error::other))?;
        rec.output(&path);
        rec.finish(out_dir)?;
        return Ok(());
    }
    let mut cfg = apply_overrides(GeneratorConfig::default(), overrides)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    let mut rec = Recorder::new("gen-synth", cfg.seed, flat_map(&cfg)?);
    let splits = rec.time("generate", || generate(&cfg))?;
    for (name, ds) in [("train.jsonl", &splits.train), ("val.jsonl", &splits.val), ("test.jsonl", &splits.test)] {
        let path = out_dir.join(name);
        write_atomic_with(&path, |w| ds.write_to(w).map_err(std::io::Error::other))?;
        rec.output(&path);
    }
    let path = out_dir.join("archetypes.json");
    save_json_pretty(&path, &splits.truth)?;
    rec.output(&path);
    rec.summary(json!({"train": splits.train.len(), "val": splits.val.len(), "test": splits.test.len()}));
    rec.finish(out_dir)?;
    Ok(())
}

fn flat_map<T: serde::Serialize>(value: &T) -> Result<BTreeMap<String, String>, Error> {
    let serde_json::Value::Object(obj) = serde_json::to_value(value)? else {
        return Ok(BTreeMap::new());
    };
    Ok(obj.into_iter().map(|(k, v)| (k, v.to_string())).collect())
}

/// The step commands in sequence, through the same files, so the outputs
/// are byte-identical to running the steps by hand.
pub fn run_all(common: &Common, data: &DataArgs) -> Result<EvalReport> {
    let common = Common {
        profile: Some(common.profile.clone().unwrap_or_else(|| data.default_profile().into())),
        ..common.clone()
    };
    let cfg = resolve_config(&common, data.default_profile())?;
    let mut rec = Recorder::new("run-all", cfg.seed, cfg.to_map());
    rec.time("train-encoder", || train_encoder(&common, data)).context("train-encoder")?;
    rec.time("embed", || embed(&common, data, None)).context("embed")?;
    rec.time("compress", || compress(&common, None)).context("compress")?;
    rec.time("train-gnn", || train_gnn(&common, None)).context("train-gnn")?;
    rec.time("finetune", || finetune(&common, None, None, None, EncoderChoice::Default)).context("finetune")?;
    let report = rec.time("eval", || eval(&common.out_dir, None, None)).context("eval")?;
    rec.output(&common.out_dir.join(files::BUNDLE));
    rec.output(&common.out_dir.join(files::EVAL));
    rec.summary(serde_json::to_value(&report)?);
    rec.finish(&common.out_dir)?;
    Ok(report)
}
