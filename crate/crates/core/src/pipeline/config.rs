//! Flat `key = value` pipeline configuration with named profiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compress::CompressionMode;
use crate::error::{Error, Result};
use crate::gnn::ConvKind;
use crate::graph::{ConnectionRule, SimilarityMetric};
use crate::task::TaskKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: String,
    pub task: TaskKind,
    pub metric: SimilarityMetric,
    pub epsilon: f64,
    /// Neighbors per node for `build-graph`; 0 selects the ε rule.
    pub graph_k: usize,
    /// Compressed node count K.
    pub k: usize,
    pub pos_ratio: f64,
    /// Cluster each class separately (balanced) or pool all nodes.
    pub per_class: bool,
    pub mode: CompressionMode,
    pub kmeans_iters: usize,
    pub conv: ConvKind,
    /// Embedding width F_s.
    pub hidden: usize,
    /// GNN width F_w.
    pub width: usize,
    pub head_depth: usize,
    pub encoder_lr: f64,
    pub batch_size: usize,
    pub encoder_epochs: usize,
    pub patience: usize,
    pub gnn_lr: f64,
    pub gnn_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub fallback_m: usize,
    /// Hours of history per sample for demand tables.
    pub window: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::fraud()
    }
}

impl PipelineConfig {
    /// Binary sequence classification with embedding similarity.
    pub fn fraud() -> Self {
        Self {
            profile: "fraud".into(),
            task: TaskKind::Classification,
            metric: SimilarityMetric::Cosine,
            epsilon: 0.95,
            graph_k: 0,
            k: 500,
            pos_ratio: 0.3,
            per_class: true,
            mode: CompressionMode::Centroid,
            kmeans_iters: 100,
            conv: ConvKind::SageMean,
            hidden: 256,
            width: 32,
            head_depth: 1,
            encoder_lr: 1e-5,
            batch_size: 64,
            encoder_epochs: 100,
            patience: 10,
            gnn_lr: 5e-3,
            gnn_epochs: 50,
            finetune_lr: 5e-3,
            finetune_epochs: 20,
            finetune_batch: 256,
            fallback_m: 1,
            window: 12,
            seed: 0,
        }
    }

    /// Demand forecasting with Pearson similarity.
    pub fn mobility() -> Self {
        Self {
            profile: "mobility".into(),
            task: TaskKind::Regression,
            metric: SimilarityMetric::Pearson,
            epsilon: 0.5,
            k: 100,
            per_class: false,
            hidden: 64,
            width: 16,
            ..Self::fraud()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "fraud" => Ok(Self::fraud()),
            "mobility" => Ok(Self::mobility()),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected fraud or mobility)"))),
        }
    }

    pub fn rule(&self) -> ConnectionRule {
        ConnectionRule {
            metric: self.metric,
            epsilon: self.epsilon,
            fallback_m: self.fallback_m,
        }
    }

    /// Every field as display text, keyed by name.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries().into_iter().collect()
    }

    fn entries(&self) -> Vec<(String, String)> {
        let serde_json::Value::Object(obj) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config is a struct")
        };
        obj.into_iter()
            .map(|(k, v)| {
                let text = match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, text)
            })
            .collect()
    }

    /// Overrides one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let serde_json::Value::Object(mut obj) = serde_json::to_value(&*self)? else {
            unreachable!("config is a struct")
        };
        let Some(slot) = obj.get(key) else {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        };
        let parsed = if slot.is_string() {
            serde_json::Value::String(value.to_string())
        } else {
            serde_json::from_str(value).map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))?
        };
        obj.insert(key.to_string(), parsed);
        let next: Self = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::Config(format!("invalid value `{value}` for `{key}`: {e}")))?;
        *self = next;
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A `profile` line
    /// resets every field to that profile's defaults, so it must come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "profile" {
                cfg = Self::profile(value)?;
            } else {
                cfg.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Text form accepted by [`PipelineConfig::parse`], profile first, then
    /// keys in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = format!("profile = {}\n", self.profile);
        for (k, v) in self.entries() {
            if k != "profile" {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(-1.0..=1.0).contains(&self.epsilon) {
            return fail("epsilon must lie in [-1, 1]");
        }
        if self.k == 0 || self.hidden == 0 || self.width == 0 || self.head_depth == 0 {
            return fail("k, hidden, width and head_depth must be positive");
        }
        if !(self.pos_ratio > 0.0 && self.pos_ratio < 1.0) {
            return fail("pos_ratio must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.finetune_batch == 0 || self.fallback_m == 0 || self.window == 0 {
            return fail("batch sizes, fallback_m and window must be positive");
        }
        if self.encoder_epochs == 0 {
            return fail("encoder_epochs must be positive");
        }
        for lr in [self.encoder_lr, self.gnn_lr, self.finetune_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail("learning rates must be positive");
            }
        }
        Ok(())
    }
}
