//! Gated recurrent sequence encoder with an affine prediction head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{SequenceDataset, SequenceRecord};
use super::schema::FieldSchema;
use crate::error::{dim, Error, Result};
use crate::layers::{leaf, output_activation, BoundDense, Dense};
use crate::task::{Prediction, TaskKind};
use crate::tensor::{Matrix, Tape, Var};

/// Records per forward pass when embedding a whole dataset.
const EMBED_CHUNK: usize = 256;

/// LSTM cell weights. Gate blocks in `weight`/`bias` columns are ordered
/// input, forget, output, candidate; rows are `[x ‖ h]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub weight: Matrix,
    pub bias: Matrix,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input,
            hidden,
            weight: Matrix::glorot(input + hidden, 4 * hidden, rng),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }
}

/// One recurrent step: returns the next `(h, c)`.
pub(crate) fn lstm_step(
    tape: &mut Tape,
    weight: Var,
    bias: Var,
    hidden: usize,
    x: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let xh = tape.concat_cols(x, h)?;
    let z = tape.matmul(xh, weight)?;
    let z = tape.add_row(z, bias)?;
    let zi = tape.slice_cols(z, 0, hidden)?;
    let zf = tape.slice_cols(z, hidden, hidden)?;
    let zo = tape.slice_cols(z, 2 * hidden, hidden)?;
    let zg = tape.slice_cols(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub schema: FieldSchema,
    pub task: TaskKind,
    pub outputs: usize,
    pub cell: LstmCell,
    pub head: Vec<Dense>,
}

pub(crate) struct BoundEncoder {
    cell_weight: Var,
    cell_bias: Var,
    head: Vec<BoundDense>,
}

impl BoundEncoder {
    pub(crate) fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.cell_weight, self.cell_bias];
        for d in &self.head {
            v.push(d.weight);
            v.push(d.bias);
        }
        v
    }
}

impl EncoderModel {
    /// Fresh model; `head_depth` affine layers (hidden ones ReLU, width
    /// `hidden`).
    pub fn new<R: Rng + ?Sized>(
        schema: FieldSchema,
        task: TaskKind,
        outputs: usize,
        hidden: usize,
        head_depth: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || outputs == 0 {
            return Err(Error::Parameter("encoder widths must be positive".into()));
        }
        let input = schema.width();
        let cell = LstmCell::new(input, hidden, rng);
        let depth = head_depth.max(1);
        let mut head = Vec::with_capacity(depth);
        for layer in 0..depth {
            let out = if layer + 1 == depth { outputs } else { hidden };
            head.push(Dense::new(hidden, out, rng));
        }
        Ok(Self {
            schema,
            task,
            outputs,
            cell,
            head,
        })
    }

    /// Embedding width F_s.
    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    /// Encoded event width F_e.
    pub fn input_width(&self) -> usize {
        self.cell.input
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = vec![&self.cell.weight, &self.cell.bias];
        for d in &self.head {
            p.push(&d.weight);
            p.push(&d.bias);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.cell.weight, &mut self.cell.bias];
        for d in &mut self.head {
            p.push(&mut d.weight);
            p.push(&mut d.bias);
        }
        p
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundEncoder {
        BoundEncoder {
            cell_weight: leaf(tape, &self.cell.weight, trainable),
            cell_bias: leaf(tape, &self.cell.bias, trainable),
            head: self.head.iter().map(|d| d.bind(tape, trainable)).collect(),
        }
    }

    /// Per-step input matrices (`records × F_e`) for a batch.
    pub(crate) fn step_inputs(&self, records: &[&SequenceRecord]) -> Result<Vec<Matrix>> {
        let t_len = records.first().map_or(0, |r| r.events.len());
        let width = self.input_width();
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut m = Matrix::zeros(records.len(), width);
            for (i, r) in records.iter().enumerate() {
                let ev = r.events.get(t).ok_or_else(|| Error::SchemaViolation {
                    field: "events".into(),
                    detail: format!("record `{}` is shorter than its batch", r.id),
                })?;
                self.schema
                    .encode_event_into(ev, m.row_mut(i))
                    .map_err(|e| Error::Record {
                        id: r.id.clone(),
                        source: Box::new(e),
                    })?;
            }
            steps.push(m);
        }
        Ok(steps)
    }

    /// Final hidden state after scanning `steps` from zero state.
    pub(crate) fn encode_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundEncoder,
        steps: Vec<Matrix>,
    ) -> Result<Var> {
        let batch = steps.first().map_or(0, Matrix::rows);
        let hidden = self.hidden();
        let mut h = tape.constant(Matrix::zeros(batch, hidden));
        let mut c = tape.constant(Matrix::zeros(batch, hidden));
        for x in steps {
            if x.cols() != self.input_width() {
                return Err(dim("encode_sequence", x.shape(), (batch, self.input_width())));
            }
            let x = tape.constant(x);
            (h, c) = lstm_step(tape, bound.cell_weight, bound.cell_bias, hidden, x, h, c)?;
        }
        Ok(h)
    }

    pub(crate) fn head_on_tape(&self, tape: &mut Tape, bound: &BoundEncoder, h: Var) -> Result<Var> {
        let mut x = h;
        let last = bound.head.len() - 1;
        for (i, layer) in bound.head.iter().enumerate() {
            x = layer.apply(tape, x)?;
            if i < last {
                x = tape.relu(x);
            }
        }
        Ok(output_activation(tape, self.task, x))
    }

    pub fn encode_sequence(&self, record: &SequenceRecord) -> Result<Vec<f64>> {
        if record.events.is_empty() {
            return Err(Error::EmptySequence(record.id.clone()));
        }
        let m = self.encode_batch(&[record])?;
        Ok(m.into_vec())
    }

    fn encode_batch(&self, records: &[&SequenceRecord]) -> Result<Matrix> {
        let steps = self.step_inputs(records)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let h = self.encode_on_tape(&mut tape, &bound, steps)?;
        Ok(tape.into_value(h))
    }

    /// `N×F_s` embeddings, row `i` for record `i`.
    pub fn embed_all(&self, dataset: &SequenceDataset) -> Result<Matrix> {
        if let Some(r) = dataset.records().iter().find(|r| r.events.is_empty()) {
            return Err(Error::EmptySequence(r.id.clone()));
        }
        let mut data = Vec::with_capacity(dataset.len() * self.hidden());
        let refs: Vec<&SequenceRecord> = dataset.records().iter().collect();
        for chunk in refs.chunks(EMBED_CHUNK) {
            data.extend(self.encode_batch(chunk)?.into_vec());
        }
        Ok(Matrix::from_raw(dataset.len(), self.hidden(), data))
    }

    /// Head applied to a batch of embeddings (`rows × F_s`).
    pub fn predict_embeddings(&self, embeddings: &Matrix) -> Result<Matrix> {
        if embeddings.cols() != self.hidden() {
            return Err(dim("predict_head_seq", embeddings.shape(), (1, self.hidden())));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let h = tape.constant(embeddings.clone());
        let out = self.head_on_tape(&mut tape, &bound, h)?;
        Ok(tape.into_value(out))
    }

    pub fn predict_head(&self, h: &[f64]) -> Result<Prediction> {
        let m = self.predict_embeddings(&Matrix::from_vec(1, h.len(), h.to_vec())?)?;
        Ok(Prediction::from_row(self.task, m.row(0)))
    }

    /// Encoder-only predictions for every record.
    pub fn predict_dataset(&self, dataset: &SequenceDataset) -> Result<Vec<Prediction>> {
        let h = self.embed_all(dataset)?;
        let out = self.predict_embeddings(&h)?;
        Ok(out.iter_rows().map(|r| Prediction::from_row(self.task, r)).collect())
    }
}
