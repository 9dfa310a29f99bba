//! Event sequences and their JSON Lines representation.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{label_kind, Label, LabelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Number(f64),
    Text(String),
}

impl FieldValue {
    /// Category key for this value; integral numbers print without a
    /// fractional part.
    pub fn category_key(&self) -> String {
        match self {
            FieldValue::Text(s) => s.clone(),
            FieldValue::Number(v) if v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", *v as i64),
            FieldValue::Number(v) => format!("{v:?}"),
        }
    }
}

pub type Event = BTreeMap<String, FieldValue>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub events: Vec<Event>,
    pub label: Label,
}

/// Records that all share the same sequence length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceDataset {
    records: Vec<SequenceRecord>,
}

impl SequenceDataset {
    pub fn new(records: Vec<SequenceRecord>) -> Result<Self> {
        if let Some(first) = records.first() {
            let len = first.events.len();
            if let Some(bad) = records.iter().find(|r| r.events.len() != len) {
                return Err(Error::SchemaViolation {
                    field: "events".into(),
                    detail: format!(
                        "record `{}` has {} events, expected {len}",
                        bad.id,
                        bad.events.len()
                    ),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SequenceRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.records.first().map_or(0, |r| r.events.len())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn label_kind(&self) -> LabelKind {
        label_kind(&self.labels())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        Self::new(read_records(reader)?)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parses JSON Lines records, skipping blank lines.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<SequenceRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}
