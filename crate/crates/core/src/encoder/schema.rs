//! Field-level feature extraction: min-max scaling and one-hot encoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{Event, FieldValue, SequenceDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Numerical { min: f64, max: f64 },
    Categorical { vocab: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn width(&self) -> usize {
        match &self.kind {
            FieldKind::Numerical { .. } => 1,
            FieldKind::Categorical { vocab } => vocab.len(),
        }
    }
}

/// Frozen per-field encoding fitted on training data. Fields are ordered by
/// name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSchema {
    fields: Vec<FieldSpec>,
}

enum Acc {
    Num { min: f64, max: f64 },
    Cat { vocab: Vec<String> },
}

impl FieldSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        for f in &fields {
            match &f.kind {
                FieldKind::Numerical { min, max } if !(min <= max) => {
                    return Err(Error::SchemaViolation {
                        field: f.name.clone(),
                        detail: format!("min {min} exceeds max {max}"),
                    })
                }
                FieldKind::Categorical { vocab } => {
                    let mut seen = std::collections::HashSet::new();
                    if let Some(dup) = vocab.iter().find(|v| !seen.insert(v.as_str())) {
                        return Err(Error::SchemaViolation {
                            field: f.name.clone(),
                            detail: format!("duplicate category `{dup}`"),
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(Self { fields })
    }

    /// Fits ranges and vocabularies over every event of `dataset`.
    ///
    /// A field whose values are all numbers is numerical; any text value
    /// makes it categorical. Vocabularies keep first-appearance order.
    pub fn fit(dataset: &SequenceDataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("cannot fit a schema on zero records".into()));
        }
        let mut text_fields = std::collections::HashSet::new();
        for r in dataset.records() {
            for e in &r.events {
                for (k, v) in e {
                    if matches!(v, FieldValue::Text(_)) {
                        text_fields.insert(k.clone());
                    }
                }
            }
        }
        let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
        for r in dataset.records() {
            for e in &r.events {
                for (k, v) in e {
                    let slot = acc.entry(k.clone()).or_insert_with(|| {
                        if text_fields.contains(k) {
                            Acc::Cat { vocab: Vec::new() }
                        } else {
                            Acc::Num {
                                min: f64::INFINITY,
                                max: f64::NEG_INFINITY,
                            }
                        }
                    });
                    match (slot, v) {
                        (Acc::Num { min, max }, FieldValue::Number(x)) => {
                            if !x.is_finite() {
                                return Err(Error::SchemaViolation {
                                    field: k.clone(),
                                    detail: "non-finite value".into(),
                                });
                            }
                            *min = min.min(*x);
                            *max = max.max(*x);
                        }
                        (Acc::Cat { vocab }, v) => {
                            let key = v.category_key();
                            if !vocab.contains(&key) {
                                vocab.push(key);
                            }
                        }
                        (Acc::Num { .. }, FieldValue::Text(_)) => unreachable!(),
                    }
                }
            }
        }
        if acc.is_empty() {
            return Err(Error::EmptyInput("events carry no fields".into()));
        }
        let fields = acc
            .into_iter()
            .map(|(name, a)| FieldSpec {
                name,
                kind: match a {
                    Acc::Num { min, max } => FieldKind::Numerical { min, max },
                    Acc::Cat { vocab } => FieldKind::Categorical { vocab },
                },
            })
            .collect();
        Self::new(fields)
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    /// Encoded width: numeric field count plus the sum of vocabulary sizes.
    pub fn width(&self) -> usize {
        self.fields.iter().map(FieldSpec::width).sum()
    }

    pub fn encode_event(&self, event: &Event) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.encode_event_into(event, &mut out)?;
        Ok(out)
    }

    /// Writes the encoding of `event` into `out` (length [`Self::width`]).
    pub fn encode_event_into(&self, event: &Event, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.width());
        let mut at = 0;
        for f in &self.fields {
            let v = event.get(&f.name).ok_or_else(|| Error::SchemaViolation {
                field: f.name.clone(),
                detail: "missing from event".into(),
            })?;
            match &f.kind {
                FieldKind::Numerical { min, max } => {
                    let x = match v {
                        FieldValue::Number(x) if x.is_finite() => *x,
                        _ => {
                            return Err(Error::SchemaViolation {
                                field: f.name.clone(),
                                detail: "expected a finite number".into(),
                            })
                        }
                    };
                    out[at] = if max > min {
                        ((x - min) / (max - min)).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    at += 1;
                }
                FieldKind::Categorical { vocab } => {
                    let block = &mut out[at..at + vocab.len()];
                    block.iter_mut().for_each(|b| *b = 0.0);
                    let key = v.category_key();
                    if let Some(pos) = vocab.iter().position(|c| *c == key) {
                        block[pos] = 1.0;
                    }
                    at += vocab.len();
                }
            }
        }
        Ok(())
    }
}
