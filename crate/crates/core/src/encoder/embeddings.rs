//! Sequence embeddings with ids and labels, stored as CSV
//! `id,f0,...,f{F-1},label`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::task::Label;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<Label>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, features: Matrix, labels: Vec<Label>) -> Result<Self> {
        if ids.len() != features.rows() || labels.len() != features.rows() {
            return Err(Error::Dimension {
                op: "embedding_set",
                left: (ids.len(), labels.len()),
                right: features.shape(),
            });
        }
        Ok(Self { ids, features, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        if header.len() < 3 || &header[0] != "id" || &header[header.len() - 1] != "label" {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `id,f0,...,label`".into(),
            });
        }
        let dim = header.len() - 2;
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            if row.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} cells, found {}", header.len(), row.len()),
                });
            }
            ids.push(row[0].to_string());
            for cell in row.iter().skip(1).take(dim) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric cell `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, message: format!("non-finite cell `{cell}`") });
                }
                data.push(v);
            }
            let raw = row[header.len() - 1].trim();
            let label: Label = serde_json::from_str(raw).map_err(|_| Error::Parse {
                line,
                message: format!("bad label `{raw}`"),
            })?;
            labels.push(label);
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("embedding file has no rows".into()));
        }
        let features = Matrix::from_raw(ids.len(), dim, data);
        Self::new(ids, features, labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        header.push("label".into());
        w.write_record(&header).map_err(csv_io)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = Vec::with_capacity(self.dim() + 2);
            row.push(id.clone());
            row.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            row.push(serde_json::to_string(&self.labels[i])?);
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
