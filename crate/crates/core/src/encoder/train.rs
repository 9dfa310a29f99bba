//! Mini-batch training of the encoder with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{SequenceDataset, SequenceRecord};
use super::model::EncoderModel;
use super::schema::FieldSchema;
use crate::error::{Error, Result};
use crate::layers::LossKind;
use crate::task::{output_width, target_matrix, Label, TaskKind};
use crate::tensor::{Adam, AdamConfig, Matrix, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainConfig {
    pub task: TaskKind,
    /// Embedding width F_s.
    pub hidden: usize,
    pub head_depth: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Classification,
            hidden: 256,
            head_depth: 1,
            lr: 1e-5,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainReport {
    /// Mean mini-batch loss per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Sequences pre-encoded as `T` row blocks of width F_e per record.
struct Encoded {
    t_len: usize,
    width: usize,
    data: Vec<f64>,
}

impl Encoded {
    fn new(schema: &FieldSchema, dataset: &SequenceDataset) -> Result<Self> {
        let t_len = dataset.seq_len();
        let width = schema.width();
        let mut data = vec![0.0; dataset.len() * t_len * width];
        for (i, r) in dataset.records().iter().enumerate() {
            for (t, ev) in r.events.iter().enumerate() {
                let at = (i * t_len + t) * width;
                schema
                    .encode_event_into(ev, &mut data[at..at + width])
                    .map_err(|e| Error::Record {
                        id: r.id.clone(),
                        source: Box::new(e),
                    })?;
            }
        }
        Ok(Self { t_len, width, data })
    }

    fn steps(&self, idx: &[usize]) -> Vec<Matrix> {
        (0..self.t_len)
            .map(|t| {
                let mut m = Vec::with_capacity(idx.len() * self.width);
                for &i in idx {
                    let at = (i * self.t_len + t) * self.width;
                    m.extend_from_slice(&self.data[at..at + self.width]);
                }
                Matrix::from_raw(idx.len(), self.width, m)
            })
            .collect()
    }
}

fn batch_loss(
    model: &EncoderModel,
    steps: Vec<Matrix>,
    target: &Matrix,
    loss: LossKind,
    trainable: bool,
) -> Result<(f64, Option<Vec<Matrix>>)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, trainable);
    let h = model.encode_on_tape(&mut tape, &bound, steps)?;
    let pred = model.head_on_tape(&mut tape, &bound, h)?;
    let l = loss.apply(&mut tape, pred, target)?;
    let value = tape.scalar(l);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("encoder loss became {value}")));
    }
    if !trainable {
        return Ok((value, None));
    }
    let mut g = tape.backward(l)?;
    Ok((value, Some(bound.vars().into_iter().map(|v| g.take(v)).collect())))
}

/// L_seq over `records` and its gradients, in [`EncoderModel::params`] order.
pub fn sequence_loss_and_gradients(
    model: &EncoderModel,
    records: &[&SequenceRecord],
    labels: &[Label],
) -> Result<(f64, Vec<Matrix>)> {
    let target = target_matrix(model.task, labels, model.outputs)?;
    let steps = model.step_inputs(records)?;
    let (value, grads) = batch_loss(model, steps, &target, LossKind::for_task(model.task), true)?;
    Ok((value, grads.expect("trainable pass returns gradients")))
}

fn dataset_loss(model: &EncoderModel, enc: &Encoded, targets: &Matrix, loss: LossKind) -> Result<f64> {
    let n = targets.rows();
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let target = targets.select_rows(chunk)?;
        let (l, _) = batch_loss(model, enc.steps(chunk), &target, loss, false)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / n as f64)
}

/// Fits the schema on `train`, then trains from a seeded initialization and
/// returns the snapshot with the lowest validation loss.
pub fn train_encoder(
    train: &SequenceDataset,
    val: &SequenceDataset,
    config: &EncoderTrainConfig,
) -> Result<(EncoderModel, EncoderTrainReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("encoder training needs train and validation records".into()));
    }
    if config.batch_size == 0 || config.hidden == 0 || config.max_epochs == 0 {
        return Err(Error::Parameter("batch_size, hidden and max_epochs must be positive".into()));
    }
    if train.seq_len() != val.seq_len() {
        return Err(Error::SchemaViolation {
            field: "events".into(),
            detail: format!("train length {} vs validation length {}", train.seq_len(), val.seq_len()),
        });
    }
    if train.seq_len() == 0 {
        return Err(Error::EmptySequence(train.records()[0].id.clone()));
    }
    let train_labels = train.labels();
    let val_labels = val.labels();
    let outputs = output_width(config.task, &train_labels)?;
    if config.task == TaskKind::Classification {
        output_width(config.task, &val_labels)?;
    }
    let train_y = target_matrix(config.task, &train_labels, outputs)?;
    let val_y = target_matrix(config.task, &val_labels, outputs)?;
    let loss = LossKind::for_task(config.task);

    let schema = FieldSchema::fit(train)?;
    let train_enc = Encoded::new(&schema, train)?;
    let val_enc = Encoded::new(&schema, val)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = EncoderModel::new(
        schema,
        config.task,
        outputs,
        config.hidden,
        config.head_depth,
        &mut rng,
    )?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), model.params());

    let mut report = EncoderTrainReport::default();
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let target = train_y.select_rows(batch)?;
            let (l, grads) = batch_loss(&model, train_enc.steps(batch), &target, loss, true)?;
            adam.step(&mut model.params_mut(), &grads.unwrap_or_default())?;
            total += l * batch.len() as f64;
        }
        report.train_loss.push(total / train.len() as f64);
        let v = dataset_loss(&model, &val_enc, &val_y, loss)?;
        report.val_loss.push(v);
        report.epochs_run = epoch + 1;
        if v < best.0 {
            best = (v, model.clone());
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    Ok((best.1, report))
}
