use seqgraph::demand::{demand_sequences, read_demand_csv, write_demand_csv};
use seqgraph::encoder::SequenceDataset;
use seqgraph::inference::Scorer;
use seqgraph::pipeline::{embed_step, evaluate, run_training, EvalReport, PipelineConfig};
use seqgraph::synth::{generate, generate_demand, DemandConfig, GeneratorConfig};

use crate::Verdict;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Trains the full pipeline and evaluates both the graph model and the
/// bundled encoder head on the test split.
fn train_and_evaluate(
    cfg: &PipelineConfig,
    train: &SequenceDataset,
    val: &SequenceDataset,
    test: &SequenceDataset,
) -> seqgraph::Result<EvalReport> {
    let run = run_training(cfg, train, val)?;
    let encoder = run.bundle.encoder.clone().expect("run_training bundles the encoder");
    let test = embed_step(&encoder, test)?;
    Ok(evaluate(&Scorer::new(run.bundle)?, &test)?.report)
}

/// Encoder schedule shared by both end-to-end checks. The profile default
/// learning rate is tuned for far longer training than a desk run affords.
fn short_schedule(mut cfg: PipelineConfig, seed: u64, encoder_epochs: usize) -> PipelineConfig {
    cfg.encoder_lr = 1e-3;
    cfg.encoder_epochs = encoder_epochs;
    cfg.patience = 2;
    cfg.seed = seed;
    cfg
}

pub fn uplift() -> Verdict {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let splits = match generate(&GeneratorConfig { seed, ..GeneratorConfig::default() }) {
            Ok(s) => s,
            Err(e) => return Verdict::fail(format!("seed {seed}: generator failed: {e}")),
        };
        let cfg = PipelineConfig { hidden: 64, ..short_schedule(PipelineConfig::fraud(), seed, 5) };
        let report = match train_and_evaluate(&cfg, &splits.train, &splits.val, &splits.test) {
            Ok(r) => r,
            Err(e) => return Verdict::fail(format!("seed {seed}: {e}")),
        };
        let graph = report.graph_model.primary();
        let Some(encoder) = report.encoder_only.map(|q| q.primary()) else {
            return Verdict::fail("evaluation did not score the encoder head");
        };
        let delta = graph - encoder;
        if delta >= 0.01 {
            wins += 1;
        }
        lines.push(format!("s{seed} {graph:.4}/{encoder:.4} ({delta:+.4})"));
    }
    Verdict::new(
        wins >= 4,
        format!("{wins}/5 seeds gain >= +0.01 AUPRC over the encoder head (need 4): {}", lines.join(", ")),
    )
}

pub fn regression() -> Verdict {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::fail(format!("temp dir: {e}")),
    };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let result = (|| -> seqgraph::Result<EvalReport> {
            // Through the CSV loader, as a public hourly table would arrive.
            let path = dir.path().join(format!("demand_{seed}.csv"));
            write_demand_csv(&generate_demand(&DemandConfig { seed, ..DemandConfig::default() })?, &path)?;
            let cfg = short_schedule(PipelineConfig::mobility(), seed, 10);
            let splits = demand_sequences(&read_demand_csv(&path)?, cfg.window)?;
            train_and_evaluate(&cfg, &splits.train, &splits.val, &splits.test)
        })();
        let report = match result {
            Ok(r) => r,
            Err(e) => return Verdict::fail(format!("seed {seed}: {e}")),
        };
        let (rmse, smape) = (report.graph_model.primary(), report.graph_model.secondary());
        let Some(enc) = report.encoder_only.map(|q| q.primary()) else {
            return Verdict::fail("evaluation did not score the encoder head");
        };
        if !(rmse.is_finite() && smape.is_finite()) {
            return Verdict::fail(format!("seed {seed}: non-finite RMSE {rmse} or sMAPE {smape}"));
        }
        if rmse <= enc {
            wins += 1;
        }
        lines.push(format!("s{seed} RMSE {rmse:.4} vs {enc:.4}, sMAPE {smape:.4}"));
    }
    Verdict::new(
        wins >= 3,
        format!("{wins}/5 seeds with graph RMSE <= encoder RMSE (need 3), Pearson eps=0.5 K=100: {}", lines.join("; ")),
    )
}
