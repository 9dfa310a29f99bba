//! Seeded synthetic datasets with planted relational structure.
//!
//! Sequences are drawn from a mixture of archetypes. Every archetype fixes
//! per-step event distributions and a label propensity, so sequences of the
//! same archetype are mutually informative about each other's labels.

mod demand;
mod embeddings;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::{Event, FieldValue, SequenceDataset, SequenceRecord};
use crate::error::{Error, Result};
use crate::metrics::auprc;
use crate::task::Label;

pub use demand::{generate_demand, DemandConfig};
pub use embeddings::{synthetic_embeddings, EmbeddingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_sequences: usize,
    /// Events per sequence.
    pub seq_len: usize,
    pub numeric_fields: usize,
    pub categorical_fields: usize,
    pub vocab_size: usize,
    pub n_archetypes: usize,
    pub positive_rate: f64,
    /// Standard deviation of numeric jitter; categorical values are
    /// resampled with probability `noise / (1 + noise)`.
    pub noise: f64,
    /// How much quieter high-propensity archetypes are than the rest, in
    /// [0, 1): an archetype's noise is `noise · (1 − tightness · p / p_max)`.
    pub tightness: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_sequences: 75_000,
            seq_len: 8,
            numeric_fields: 4,
            categorical_fields: 2,
            vocab_size: 6,
            n_archetypes: 300,
            positive_rate: 0.10,
            noise: 0.8,
            tightness: 0.95,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return fail(format!("positive_rate {} outside (0, 1)", self.positive_rate));
        }
        if self.n_archetypes < 2 {
            return fail("n_archetypes must be at least 2".into());
        }
        if self.n_sequences < 6 {
            return fail("n_sequences must be at least 6 to fill three splits".into());
        }
        if self.seq_len == 0 {
            return fail("seq_len must be positive".into());
        }
        if self.numeric_fields + self.categorical_fields == 0 {
            return fail("events need at least one field".into());
        }
        if self.categorical_fields > 0 && self.vocab_size < 2 {
            return fail("vocab_size must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.tightness) {
            return fail(format!("tightness {} outside [0, 1)", self.tightness));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise {} must be finite and nonnegative", self.noise));
        }
        Ok(())
    }
}

/// Event distribution and label propensity of one archetype.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    /// `seq_len × numeric_fields` means.
    pub means: Vec<Vec<f64>>,
    /// `seq_len × categorical_fields` modal category indices.
    pub modes: Vec<Vec<usize>>,
    pub propensity: f64,
    /// Noise scale of this archetype.
    pub noise: f64,
}

/// Diagnostics-only sidecar: which archetype produced each sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub archetypes: Vec<Archetype>,
    pub assignments: Vec<(String, usize)>,
}

impl GroundTruth {
    pub fn archetype_of(&self) -> std::collections::HashMap<&str, usize> {
        self.assignments.iter().map(|(id, a)| (id.as_str(), *a)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplits {
    pub train: SequenceDataset,
    pub val: SequenceDataset,
    pub test: SequenceDataset,
    pub truth: GroundTruth,
}

impl SyntheticSplits {
    /// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `archetypes.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.train.write_jsonl(&dir.join("train.jsonl"))?;
        self.val.write_jsonl(&dir.join("val.jsonl"))?;
        self.test.write_jsonl(&dir.join("test.jsonl"))?;
        let sidecar = serde_json::to_vec_pretty(&self.truth)?;
        std::fs::write(dir.join("archetypes.json"), sidecar)?;
        Ok(())
    }
}

pub fn numeric_field(f: usize) -> String {
    format!("num{f}")
}

pub fn categorical_field(c: usize) -> String {
    format!("cat{c}")
}

fn category(v: usize) -> FieldValue {
    FieldValue::Text(format!("v{v}"))
}

/// Scale `s` with `mean(min(1, s·r)) = target`, found by bisection.
fn calibrate_propensities(raw: &[f64], target: f64) -> Result<Vec<f64>> {
    let mean_at = |s: f64| raw.iter().map(|r| (s * r).min(1.0)).sum::<f64>() / raw.len() as f64;
    let ceiling = raw.iter().filter(|&&r| r > 0.0).count() as f64 / raw.len() as f64;
    if target >= ceiling {
        return Err(Error::Config(format!(
            "positive_rate {target} unreachable: at most {ceiling} of archetypes can be positive"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean_at(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Ok(raw.iter().map(|r| (s * r).min(1.0)).collect())
}

fn make_archetypes(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Archetype>> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(config.n_archetypes);
    let mut raw = Vec::with_capacity(config.n_archetypes);
    for _ in 0..config.n_archetypes {
        let means = (0..config.seq_len)
            .map(|_| (0..config.numeric_fields).map(|_| unit.sample(rng)).collect())
            .collect();
        let modes = (0..config.seq_len)
            .map(|_| {
                (0..config.categorical_fields)
                    .map(|_| rng.random_range(0..config.vocab_size))
                    .collect()
            })
            .collect();
        // Cubing a uniform draw leaves a few archetypes carrying most risk.
        let u: f64 = rng.random();
        raw.push(u * u * u);
        out.push(Archetype {
            means,
            modes,
            propensity: 0.0,
            noise: config.noise,
        });
    }
    let calibrated = calibrate_propensities(&raw, config.positive_rate)?;
    let p_max = calibrated.iter().copied().fold(0.0, f64::max);
    for (a, p) in out.iter_mut().zip(calibrated) {
        a.propensity = p;
        a.noise = config.noise * (1.0 - config.tightness * p / p_max);
    }
    Ok(out)
}

fn sample_events(
    arch: &Archetype,
    config: &GeneratorConfig,
    unit: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<Event> {
    let resample = arch.noise / (1.0 + arch.noise);
    (0..config.seq_len)
        .map(|t| {
            let mut ev = Event::new();
            for (f, &mu) in arch.means[t].iter().enumerate() {
                let v = if arch.noise > 0.0 { mu + arch.noise * unit.sample(rng) } else { mu };
                ev.insert(numeric_field(f), FieldValue::Number(v));
            }
            for (c, &mode) in arch.modes[t].iter().enumerate() {
                let v = if arch.noise > 0.0 && rng.random::<f64>() < resample {
                    rng.random_range(0..config.vocab_size)
                } else {
                    mode
                };
                ev.insert(categorical_field(c), category(v));
            }
            ev
        })
        .collect()
}

/// Generates train, validation and test splits in 4:1:1 generation order.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticSplits> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let archetypes = make_archetypes(config, &mut rng)?;
    // Round-robin keeps archetype sizes within one of each other.
    let mut order: Vec<usize> = (0..config.n_sequences).map(|i| i % config.n_archetypes).collect();
    order.shuffle(&mut rng);

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let width = config.n_sequences.to_string().len();
    let mut records = Vec::with_capacity(config.n_sequences);
    let mut assignments = Vec::with_capacity(config.n_sequences);
    for (i, &a) in order.iter().enumerate() {
        let arch = &archetypes[a];
        let events = sample_events(arch, config, &unit, &mut rng);
        let positive = rng.random::<f64>() < arch.propensity;
        let id = format!("s{i:0width$}");
        assignments.push((id.clone(), a));
        records.push(SequenceRecord {
            id,
            events,
            label: Label::Class(positive as usize),
        });
    }

    let n_train = config.n_sequences * 4 / 6;
    let n_val = config.n_sequences / 6;
    let test = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    Ok(SyntheticSplits {
        train: SequenceDataset::new(records)?,
        val: SequenceDataset::new(val)?,
        test: SequenceDataset::new(test)?,
        truth: GroundTruth {
            config: config.clone(),
            archetypes,
            assignments,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Test AUPRC when scoring by the training positive rate of the true archetype.
    pub archetype_auprc: f64,
    /// Test AUPRC of a constant score (the label-frequency baseline).
    pub baseline_auprc: f64,
}

/// Checks that the planted structure is learnable: an oracle that knows each
/// sequence's archetype should beat the label-frequency baseline.
pub fn archetype_probe(splits: &SyntheticSplits) -> Result<ProbeReport> {
    let of = splits.truth.archetype_of();
    let k = splits.truth.archetypes.len();
    let mut pos = vec![0.0; k];
    let mut cnt = vec![0.0; k];
    for r in splits.train.records() {
        let a = of[r.id.as_str()];
        cnt[a] += 1.0;
        pos[a] += r.label.as_f64();
    }
    let prior = pos.iter().sum::<f64>() / cnt.iter().sum::<f64>();
    let labels: Vec<f64> = splits.test.records().iter().map(|r| r.label.as_f64()).collect();
    let scores: Vec<f64> = splits
        .test
        .records()
        .iter()
        .map(|r| {
            let a = of[r.id.as_str()];
            if cnt[a] > 0.0 {
                pos[a] / cnt[a]
            } else {
                prior
            }
        })
        .collect();
    Ok(ProbeReport {
        archetype_auprc: auprc(&scores, &labels)?,
        baseline_auprc: auprc(&vec![prior; labels.len()], &labels)?,
    })
}
