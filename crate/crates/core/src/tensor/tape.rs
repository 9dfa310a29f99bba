//! Reverse-mode gradient tape over dense matrices.
//!
//! Every operation evaluates eagerly and appends a node; node indices are
//! therefore a topological order and `backward` simply walks them in
//! reverse. Nodes that do not depend on any parameter carry no op record,
//! so a tape built only from constants doubles as a grad-free evaluator
//! with exactly the same arithmetic.

use super::matrix::{gemm, Operand};
use super::ops::{self, Activation, LOG_CLAMP};
use super::Matrix;
use crate::error::{dim, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Act(Activation, Var),
    RowSoftmax(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>),
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    SegmentWeightedSum(Var, Var, Vec<usize>),
    CrossEntropy(Var, Matrix),
    MeanSquared(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn check_segments(op: &'static str, rows: usize, offsets: &[usize]) -> Result<()> {
    let ok = !offsets.is_empty()
        && offsets[0] == 0
        && *offsets.last().unwrap() == rows
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(dim(op, (rows, 0), (offsets.last().copied().unwrap_or(0), offsets.len())))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn into_value(mut self, v: Var) -> Matrix {
        std::mem::replace(&mut self.nodes[v.0].value, Matrix::zeros(0, 0))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        let op = if tracked { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(dim("add", self.shape(a), self.shape(b)));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add(a, b), t))
    }

    /// Adds the single row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(dim("add_row", (r, c), self.shape(bias)));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).as_slice().to_vec();
        for i in 0..r {
            for (x, y) in value.row_mut(i).iter_mut().zip(&b) {
                *x += y;
            }
        }
        let t = self.tracked(a) || self.tracked(bias);
        Ok(self.push(value, Op::AddRow(a, bias), t))
    }

    /// Entrywise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(dim("mul", self.shape(a), self.shape(b)));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Mul(a, b), t))
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        let value = ops::elementwise(kind, self.value(a));
        let t = self.tracked(a);
        self.push(value, Op::Act(kind, a), t)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let value = ops::row_softmax(self.value(a));
        let t = self.tracked(a);
        self.push(value, Op::RowSoftmax(a), t)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(dim("concat_cols", (ra, ca), (rb, cb)));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(Matrix::from_raw(ra, ca + cb, data), Op::ConcatCols(a, b), t))
    }

    /// Columns `start..start + width` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + width > c {
            return Err(dim("slice_cols", (r, c), (start, width)));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(r * width);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..start + width]);
        }
        let t = self.tracked(a);
        Ok(self.push(Matrix::from_raw(r, width, data), Op::SliceCols(a, start), t))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let value = self.value(a).select_rows(&idx)?;
        let t = self.tracked(a);
        Ok(self.push(value, Op::GatherRows(a, idx), t))
    }

    /// Mean of each contiguous row segment `offsets[s]..offsets[s+1]`;
    /// an empty segment yields a zero row.
    pub fn segment_mean(&mut self, a: Var, offsets: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        check_segments("segment_mean", r, &offsets)?;
        let src = self.value(a);
        let segs = offsets.len() - 1;
        let mut out = Matrix::zeros(segs, c);
        for s in 0..segs {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            if hi == lo {
                continue;
            }
            let row = out.row_mut(s);
            for i in lo..hi {
                for (o, x) in row.iter_mut().zip(src.row(i)) {
                    *o += x;
                }
            }
            let n = (hi - lo) as f64;
            row.iter_mut().for_each(|o| *o /= n);
        }
        let t = self.tracked(a);
        Ok(self.push(out, Op::SegmentMean(a, offsets), t))
    }

    /// Column-wise maximum of each row segment; ties pick the first row and
    /// an empty segment yields a zero row.
    pub fn segment_max(&mut self, a: Var, offsets: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        check_segments("segment_max", r, &offsets)?;
        let src = self.value(a);
        let segs = offsets.len() - 1;
        let mut out = Matrix::zeros(segs, c);
        let mut arg = vec![usize::MAX; segs * c];
        for s in 0..segs {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            if hi == lo {
                continue;
            }
            for j in 0..c {
                let mut best = lo;
                for i in lo + 1..hi {
                    if src.get(i, j) > src.get(best, j) {
                        best = i;
                    }
                }
                out.set(s, j, src.get(best, j));
                arg[s * c + j] = best;
            }
        }
        let t = self.tracked(a);
        Ok(self.push(out, Op::SegmentMax(a, arg), t))
    }

    /// Column-wise softmax within each row segment.
    pub fn segment_softmax(&mut self, a: Var, offsets: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        check_segments("segment_softmax", r, &offsets)?;
        let mut out = self.value(a).clone();
        let mut buf = Vec::new();
        for w in offsets.windows(2) {
            for j in 0..c {
                buf.clear();
                buf.extend((w[0]..w[1]).map(|i| out.get(i, j)));
                ops::softmax_in_place(&mut buf);
                for (k, i) in (w[0]..w[1]).enumerate() {
                    out.set(i, j, buf[k]);
                }
            }
        }
        let t = self.tracked(a);
        Ok(self.push(out, Op::SegmentSoftmax(a, offsets), t))
    }

    /// `out[s] = Σ_{i in segment s} weights[i] · values[i]`, with `weights`
    /// a single column.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        weights: Var,
        offsets: Vec<usize>,
    ) -> Result<Var> {
        let (r, c) = self.shape(values);
        if self.shape(weights) != (r, 1) {
            return Err(dim("segment_weighted_sum", (r, c), self.shape(weights)));
        }
        check_segments("segment_weighted_sum", r, &offsets)?;
        let src = self.value(values);
        let w = self.value(weights);
        let segs = offsets.len() - 1;
        let mut out = Matrix::zeros(segs, c);
        for s in 0..segs {
            let row = out.row_mut(s);
            for i in offsets[s]..offsets[s + 1] {
                let wi = w.get(i, 0);
                for (o, x) in row.iter_mut().zip(src.row(i)) {
                    *o += wi * x;
                }
            }
        }
        let t = self.tracked(values) || self.tracked(weights);
        Ok(self.push(out, Op::SegmentWeightedSum(values, weights, offsets), t))
    }

    /// Cross-entropy of probability rows against a constant target.
    pub fn cross_entropy(&mut self, pred: Var, target: &Matrix) -> Result<Var> {
        let loss = ops::ce_loss(self.value(pred), target)?;
        let t = self.tracked(pred);
        Ok(self.push(Matrix::from_raw(1, 1, vec![loss]), Op::CrossEntropy(pred, target.clone()), t))
    }

    pub fn mean_squared(&mut self, pred: Var, target: &Matrix) -> Result<Var> {
        let loss = ops::mse_loss(self.value(pred), target)?;
        let t = self.tracked(pred);
        Ok(self.push(Matrix::from_raw(1, 1, vec![loss]), Op::MeanSquared(pred, target.clone()), t))
    }

    /// Propagates adjoints from the scalar `loss` back to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(dim("backward", self.shape(loss), (1, 1)));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.tracked(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.tracked(*a) {
                    // dA = G · Bᵀ
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    gemm(
                        g.rows(),
                        g.cols(),
                        bv.rows(),
                        Operand::plain(g),
                        Operand::transposed(bv),
                        &mut da,
                        false,
                    );
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*b) {
                    // dB = Aᵀ · G
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(
                        av.cols(),
                        av.rows(),
                        g.cols(),
                        Operand::transposed(av),
                        Operand::plain(g),
                        &mut db,
                        false,
                    );
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.tracked(*bias) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, x) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    self.accumulate(grads, *a, da);
                }
                if self.tracked(*b) {
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Act(kind, a) => {
                let x = self.value(*a);
                let mut da = g.clone();
                for ((d, &xi), &yi) in da
                    .as_mut_slice()
                    .iter_mut()
                    .zip(x.as_slice())
                    .zip(out.as_slice())
                {
                    *d *= kind.derivative(xi, yi);
                }
                self.accumulate(grads, *a, da);
            }
            Op::RowSoftmax(a) => {
                let mut da = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yi), &gi) in da.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *d = yi * (gi - dot);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                let w = g.cols();
                for i in 0..r {
                    da.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, da);
            }
            Op::GatherRows(a, idx_list) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for (k, &i) in idx_list.iter().enumerate() {
                    for (d, x) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                        *d += x;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SegmentMean(a, offsets) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for s in 0..offsets.len() - 1 {
                    let (lo, hi) = (offsets[s], offsets[s + 1]);
                    if hi == lo {
                        continue;
                    }
                    let n = (hi - lo) as f64;
                    for i in lo..hi {
                        for (d, x) in da.row_mut(i).iter_mut().zip(g.row(s)) {
                            *d += x / n;
                        }
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SegmentMax(a, arg) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for s in 0..g.rows() {
                    for j in 0..c {
                        let src = arg[s * c + j];
                        if src != usize::MAX {
                            let v = da.get(src, j) + g.get(s, j);
                            da.set(src, j, v);
                        }
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SegmentSoftmax(a, offsets) => {
                let (r, c) = self.shape(*a);
                let mut da = Matrix::zeros(r, c);
                for w in offsets.windows(2) {
                    for j in 0..c {
                        let dot: f64 = (w[0]..w[1]).map(|i| out.get(i, j) * g.get(i, j)).sum();
                        for i in w[0]..w[1] {
                            da.set(i, j, out.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::SegmentWeightedSum(values, weights, offsets) => {
                let vv = self.value(*values);
                let wv = self.value(*weights);
                let (r, c) = vv.shape();
                let mut dv = Matrix::zeros(r, c);
                let mut dw = Matrix::zeros(r, 1);
                for s in 0..offsets.len() - 1 {
                    let gs = g.row(s);
                    for i in offsets[s]..offsets[s + 1] {
                        let wi = wv.get(i, 0);
                        for (d, x) in dv.row_mut(i).iter_mut().zip(gs) {
                            *d += wi * x;
                        }
                        let dot: f64 = vv.row(i).iter().zip(gs).map(|(a, b)| a * b).sum();
                        dw.set(i, 0, dot);
                    }
                }
                self.accumulate(grads, *values, dv);
                self.accumulate(grads, *weights, dw);
            }
            Op::CrossEntropy(pred, target) => {
                let p = self.value(*pred);
                let scale = g.get(0, 0) / p.rows() as f64;
                let dp = p.zip_map(target, |pi, ti| {
                    if ti == 0.0 || pi <= LOG_CLAMP {
                        0.0
                    } else {
                        -scale * ti / pi
                    }
                });
                self.accumulate(grads, *pred, dp);
            }
            Op::MeanSquared(pred, target) => {
                let p = self.value(*pred);
                let n = p.as_slice().len() as f64;
                let scale = 2.0 * g.get(0, 0) / n;
                let dp = p.zip_map(target, |pi, ti| scale * (pi - ti));
                self.accumulate(grads, *pred, dp);
            }
        }
    }
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}
