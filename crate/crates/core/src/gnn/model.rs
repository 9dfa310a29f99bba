//! One-layer graph convolutions (GCN, SAGE-mean, SAGE-max, GAT) with an
//! affine prediction head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::view::MessagePassingView;
use crate::error::{dim, Error, Result};
use crate::layers::{leaf, output_activation, BoundDense, Dense};
use crate::task::{Prediction, TaskKind};
use crate::tensor::{Activation, Matrix, Tape, Var};

pub const GAT_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Gcn,
    SageMean,
    SageMax,
    Gat,
}

impl std::str::FromStr for ConvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(ConvKind::Gcn),
            "sage_mean" => Ok(ConvKind::SageMean),
            "sage_max" => Ok(ConvKind::SageMax),
            "gat" => Ok(ConvKind::Gat),
            other => Err(Error::Config(format!("unknown conv kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConvKind::Gcn => "gcn",
            ConvKind::SageMean => "sage_mean",
            ConvKind::SageMax => "sage_max",
            ConvKind::Gat => "gat",
        })
    }
}

/// Default representation width F_w per task.
pub fn default_width(task: TaskKind) -> usize {
    match task {
        TaskKind::Classification => 32,
        TaskKind::Regression => 16,
    }
}

/// Convolution weights. `weight` is D×F_w, or 2D×F_w for SAGE where the
/// input is `[self ‖ aggregate]`. GAT scores an edge `j → i` as
/// `leaky_relu(Wxᵢ·attn_target + Wxⱼ·attn_source)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub weight: Matrix,
    pub bias: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_target: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_source: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub kind: ConvKind,
    pub task: TaskKind,
    pub input_dim: usize,
    pub width: usize,
    pub outputs: usize,
    pub conv: Conv,
    pub head: Dense,
}

pub(crate) struct BoundGnn {
    weight: Var,
    bias: Var,
    attn: Option<(Var, Var)>,
    head: BoundDense,
}

impl BoundGnn {
    pub(crate) fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.weight, self.bias];
        if let Some((a, b)) = self.attn {
            v.push(a);
            v.push(b);
        }
        v.push(self.head.weight);
        v.push(self.head.bias);
        v
    }
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(
        kind: ConvKind,
        task: TaskKind,
        input_dim: usize,
        width: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || width == 0 || outputs == 0 {
            return Err(Error::Parameter("GNN dimensions must be positive".into()));
        }
        let rows = match kind {
            ConvKind::SageMean | ConvKind::SageMax => 2 * input_dim,
            _ => input_dim,
        };
        let weight = Matrix::glorot(rows, width, rng);
        let (attn_target, attn_source) = if kind == ConvKind::Gat {
            (Some(Matrix::glorot(width, 1, rng)), Some(Matrix::glorot(width, 1, rng)))
        } else {
            (None, None)
        };
        let conv = Conv { weight, bias: Matrix::zeros(1, width), attn_target, attn_source };
        let head = Dense::new(width, outputs, rng);
        Ok(Self { kind, task, input_dim, width, outputs, conv, head })
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = vec![&self.conv.weight, &self.conv.bias];
        if let (Some(a), Some(b)) = (&self.conv.attn_target, &self.conv.attn_source) {
            p.push(a);
            p.push(b);
        }
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = vec![&mut self.conv.weight, &mut self.conv.bias];
        if let (Some(a), Some(b)) = (&mut self.conv.attn_target, &mut self.conv.attn_source) {
            p.push(a);
            p.push(b);
        }
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }

    pub fn byte_size(&self) -> usize {
        self.params().iter().map(|m| m.byte_size()).sum()
    }

    /// Checks weight shapes against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        let rows = match self.kind {
            ConvKind::SageMean | ConvKind::SageMax => 2 * self.input_dim,
            _ => self.input_dim,
        };
        let bad = |what: &str| Err(Error::BundleIntegrity(format!("GNN {what} has the wrong shape")));
        if self.conv.weight.shape() != (rows, self.width) || self.conv.bias.shape() != (1, self.width) {
            return bad("convolution");
        }
        if self.kind == ConvKind::Gat {
            let ok = |m: &Option<Matrix>| m.as_ref().is_some_and(|m| m.shape() == (self.width, 1));
            if !ok(&self.conv.attn_target) || !ok(&self.conv.attn_source) {
                return bad("attention");
            }
        }
        if self.head.weight.shape() != (self.width, self.outputs) || self.head.bias.shape() != (1, self.outputs) {
            return bad("head");
        }
        Ok(())
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGnn {
        let weight = leaf(tape, &self.conv.weight, trainable);
        let bias = leaf(tape, &self.conv.bias, trainable);
        let attn = match (&self.conv.attn_target, &self.conv.attn_source) {
            (Some(a), Some(b)) => Some((leaf(tape, a, trainable), leaf(tape, b, trainable))),
            _ => None,
        };
        BoundGnn { weight, bias, attn, head: self.head.bind(tape, trainable) }
    }

    /// Representations of the view's targets (targets × F_w).
    pub(crate) fn represent_on_tape(&self, tape: &mut Tape, bound: &BoundGnn, view: &MessagePassingView) -> Result<Var> {
        if view.features.cols() != self.input_dim {
            return Err(dim("gnn_forward", view.features.shape(), (self.input_dim, self.width)));
        }
        let x = tape.constant(view.features.clone());
        // Self first, then neighbors, per target.
        let mut offsets = Vec::with_capacity(view.targets.len() + 1);
        let mut sources = Vec::new();
        let mut owners = Vec::new();
        offsets.push(0);
        for (t, list) in view.targets.iter().zip(&view.neighbors) {
            sources.push(*t);
            owners.push(*t);
            for &j in list {
                sources.push(j);
                owners.push(*t);
            }
            offsets.push(sources.len());
        }
        let pre = match self.kind {
            ConvKind::Gcn => {
                let z = tape.matmul(x, bound.weight)?;
                let coeffs: Vec<f64> = sources
                    .iter()
                    .zip(&owners)
                    .map(|(&j, &i)| 1.0 / (view.degrees[i] * view.degrees[j]).sqrt())
                    .collect();
                let coeffs = tape.constant(Matrix::from_raw(coeffs.len(), 1, coeffs));
                let zj = tape.gather_rows(z, sources)?;
                tape.segment_weighted_sum(zj, coeffs, offsets)?
            }
            ConvKind::SageMean | ConvKind::SageMax => {
                let own = tape.gather_rows(x, view.targets.clone())?;
                let mut nb_offsets = Vec::with_capacity(offsets.len());
                nb_offsets.push(0);
                let mut nb = Vec::new();
                for list in &view.neighbors {
                    nb.extend_from_slice(list);
                    nb_offsets.push(nb.len());
                }
                let xn = tape.gather_rows(x, nb)?;
                let agg = if self.kind == ConvKind::SageMean {
                    tape.segment_mean(xn, nb_offsets)?
                } else {
                    tape.segment_max(xn, nb_offsets)?
                };
                let cat = tape.concat_cols(own, agg)?;
                tape.matmul(cat, bound.weight)?
            }
            ConvKind::Gat => {
                let (a_t, a_s) = bound.attn.ok_or_else(|| Error::BundleIntegrity("GAT without attention".into()))?;
                let z = tape.matmul(x, bound.weight)?;
                let u = tape.matmul(z, a_t)?;
                let v = tape.matmul(z, a_s)?;
                let ui = tape.gather_rows(u, owners)?;
                let vj = tape.gather_rows(v, sources.clone())?;
                let logits = tape.add(ui, vj)?;
                let e = tape.activation(Activation::LeakyRelu(GAT_SLOPE), logits);
                let alpha = tape.segment_softmax(e, offsets.clone())?;
                let zj = tape.gather_rows(z, sources)?;
                tape.segment_weighted_sum(zj, alpha, offsets)?
            }
        };
        let pre = tape.add_row(pre, bound.bias)?;
        Ok(tape.relu(pre))
    }

    pub(crate) fn head_on_tape(&self, tape: &mut Tape, bound: &BoundGnn, w: Var) -> Result<Var> {
        let logits = bound.head.apply(tape, w)?;
        Ok(output_activation(tape, self.task, logits))
    }

    pub(crate) fn predict_on_tape(&self, tape: &mut Tape, bound: &BoundGnn, view: &MessagePassingView) -> Result<Var> {
        let w = self.represent_on_tape(tape, bound, view)?;
        self.head_on_tape(tape, bound, w)
    }

    /// Target representations W.
    pub fn forward(&self, view: &MessagePassingView) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let w = self.represent_on_tape(&mut tape, &bound, view)?;
        Ok(tape.into_value(w))
    }

    /// Head outputs for representations `w` (rows × F_w).
    pub fn predict(&self, w: &Matrix) -> Result<Matrix> {
        if w.cols() != self.width {
            return Err(dim("gnn_predict", w.shape(), (w.rows(), self.width)));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let wv = tape.constant(w.clone());
        let out = self.head_on_tape(&mut tape, &bound, wv)?;
        Ok(tape.into_value(out))
    }

    /// Forward and head in one pass.
    pub fn predict_view(&self, view: &MessagePassingView) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = self.predict_on_tape(&mut tape, &bound, view)?;
        Ok(tape.into_value(out))
    }

    pub fn predictions(&self, out: &Matrix) -> Vec<Prediction> {
        out.iter_rows().map(|r| Prediction::from_row(self.task, r)).collect()
    }
}

pub fn gnn_forward(model: &GnnModel, view: &MessagePassingView) -> Result<Matrix> {
    model.forward(view)
}

pub fn gnn_predict(model: &GnnModel, w: &Matrix) -> Result<Matrix> {
    model.predict(w)
}
