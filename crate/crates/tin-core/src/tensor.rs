//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Tape`] records every op in execution order (a Wengert list); a
//! [`Tensor`] is a copyable handle into it. The model graph here is small and
//! static per batch, so a flat tape beats anything fancier. Gradients are
//! allocated lazily during the backward sweep.
//!
//! Broadcasting is restricted to row-vector bias addition ([`Tensor::add_row`]);
//! everything else requires exact shapes, which keeps the gradient code
//! auditable.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// A symmetric linear operator usable inside the tape. Symmetry lets the
/// backward pass reuse the forward apply verbatim.
pub trait SymmetricMap {
    /// Row count of the (square, implicit) matrix.
    fn dim(&self) -> usize;
    fn apply(&self, x: &Mat) -> Mat;
}

/// Probability clamp applied inside the binary cross-entropy op before logs.
pub const BCE_CLAMP: f64 = 1e-12;
/// Epsilon inside the layer-norm square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    Add(usize, usize),
    /// x (n×d) + broadcast row (1×d).
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Matmul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Silu(usize),
    SoftmaxRows(usize),
    LayerNorm { x: usize, gain: usize, bias: usize },
    MeanRows(usize),
    SumAll(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows { x: usize, start: usize, len: usize },
    GatherRows { table: usize, indices: Vec<usize> },
    SymApply { x: usize, map: Rc<dyn SymmetricMap> },
    /// Summed per-entry binary cross-entropy with clamped probabilities.
    BceSum { probs: usize, targets: usize },
}

struct Node {
    op: Op,
    value: Mat,
    grad: Option<Mat>,
    requires_grad: bool,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    /// Node count at the last backward sweep; a second backward without new
    /// forward work is a caller bug.
    swept_at: Cell<Option<usize>>,
}

/// Handle to one tape entry.
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), swept_at: Cell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, value: Mat, requires_grad: bool) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value, grad: None, requires_grad });
        Tensor { tape: self, id: nodes.len() - 1 }
    }

    /// Record a constant (no gradient tracking).
    pub fn constant(&self, value: Mat) -> Tensor<'_> {
        self.push(Op::Leaf, value, false)
    }

    /// Record a trainable leaf; its gradient is available after `backward`.
    pub fn leaf(&self, value: Mat) -> Tensor<'_> {
        self.push(Op::Leaf, value, true)
    }

    /// Gradient accumulated into `t` by the last backward sweep, if any.
    pub fn grad(&self, t: Tensor<'_>) -> Option<Mat> {
        self.nodes.borrow()[t.id].grad.clone()
    }

    /// Reverse sweep from a 1×1 loss node. Each op is visited exactly once.
    /// Calling backward twice without recording new ops is an error.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        {
            let l = &nodes[loss.id];
            if l.value.rows != 1 || l.value.cols != 1 {
                return Err(Error::Contract(format!(
                    "backward needs a 1x1 loss, got {}x{}",
                    l.value.rows, l.value.cols
                )));
            }
        }
        if self.swept_at.get() == Some(nodes.len()) {
            return Err(Error::Contract(
                "backward called twice without new forward ops".into(),
            ));
        }
        self.swept_at.set(Some(nodes.len()));

        nodes[loss.id].grad = Some(Mat::from_vec(1, 1, vec![1.0]).unwrap());
        for i in (0..=loss.id).rev() {
            if !nodes[i].requires_grad || nodes[i].grad.is_none() {
                continue;
            }
            // Inputs strictly precede node i on the tape.
            let (inputs, rest) = nodes.split_at_mut(i);
            let node = &rest[0];
            let g = node.grad.as_ref().unwrap();
            backprop(node, g, inputs);
        }
        Ok(())
    }
}

/// Accumulate `delta` into the gradient slot of `inputs[id]` when it tracks
/// gradients.
fn accumulate(inputs: &mut [Node], id: usize, delta: Mat) {
    let n = &mut inputs[id];
    if !n.requires_grad {
        return;
    }
    match &mut n.grad {
        Some(g) => {
            for (a, b) in g.data.iter_mut().zip(delta.data.iter()) {
                *a += b;
            }
        }
        None => n.grad = Some(delta),
    }
}

fn backprop(node: &Node, g: &Mat, inputs: &mut [Node]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(inputs, *a, g.clone());
            accumulate(inputs, *b, g.clone());
        }
        Op::AddRow(x, row) => {
            accumulate(inputs, *x, g.clone());
            let mut gr = Mat::zeros(1, g.cols);
            for r in 0..g.rows {
                for c in 0..g.cols {
                    gr.data[c] += g.at(r, c);
                }
            }
            accumulate(inputs, *row, gr);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (&inputs[*a].value, &inputs[*b].value);
            let mut ga = g.clone();
            for (x, y) in ga.data.iter_mut().zip(vb.data.iter()) {
                *x *= y;
            }
            let mut gb = g.clone();
            for (x, y) in gb.data.iter_mut().zip(va.data.iter()) {
                *x *= y;
            }
            accumulate(inputs, *a, ga);
            accumulate(inputs, *b, gb);
        }
        Op::Scale(x, s) => {
            accumulate(inputs, *x, g.scale(*s));
        }
        Op::Matmul(a, b) => {
            let ga = g.matmul_t(&inputs[*b].value).unwrap();
            let gb = inputs[*a].value.matmul_tn(g).unwrap();
            accumulate(inputs, *a, ga);
            accumulate(inputs, *b, gb);
        }
        Op::Transpose(x) => {
            accumulate(inputs, *x, g.transpose());
        }
        Op::Relu(x) => {
            let vx = &inputs[*x].value;
            let mut gx = g.clone();
            for (gi, &xi) in gx.data.iter_mut().zip(vx.data.iter()) {
                if xi <= 0.0 {
                    *gi = 0.0;
                }
            }
            accumulate(inputs, *x, gx);
        }
        Op::Silu(x) => {
            let vx = &inputs[*x].value;
            let mut gx = g.clone();
            for (gi, &xi) in gx.data.iter_mut().zip(vx.data.iter()) {
                let s = sigmoid(xi);
                *gi *= s * (1.0 + xi * (1.0 - s));
            }
            accumulate(inputs, *x, gx);
        }
        Op::SoftmaxRows(x) => {
            // y from the forward value; dx_i = y_i (g_i - Σ_j g_j y_j).
            let y = &node.value;
            let mut gx = Mat::zeros(y.rows, y.cols);
            for r in 0..y.rows {
                let yr = y.row(r);
                let gr = g.row(r);
                let mut dot = 0.0;
                for c in 0..y.cols {
                    dot += gr[c] * yr[c];
                }
                let o = gx.row_mut(r);
                for c in 0..y.cols {
                    o[c] = yr[c] * (gr[c] - dot);
                }
            }
            accumulate(inputs, *x, gx);
        }
        Op::LayerNorm { x, gain, bias } => {
            let vx = &inputs[*x].value;
            let vg = &inputs[*gain].value;
            let d = vx.cols as f64;
            let mut gx = Mat::zeros(vx.rows, vx.cols);
            let mut ggain = Mat::zeros(1, vx.cols);
            let mut gbias = Mat::zeros(1, vx.cols);
            for r in 0..vx.rows {
                let xr = vx.row(r);
                let gr = g.row(r);
                let mean = xr.iter().sum::<f64>() / d;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                // xhat_c = (x_c - mean) * inv; gy = g ⊙ gain
                let mut mean_gy = 0.0;
                let mut mean_gy_xhat = 0.0;
                for c in 0..vx.cols {
                    let xhat = (xr[c] - mean) * inv;
                    let gy = gr[c] * vg.data[c];
                    mean_gy += gy;
                    mean_gy_xhat += gy * xhat;
                    ggain.data[c] += gr[c] * xhat;
                    gbias.data[c] += gr[c];
                }
                mean_gy /= d;
                mean_gy_xhat /= d;
                let o = gx.row_mut(r);
                for c in 0..vx.cols {
                    let xhat = (xr[c] - mean) * inv;
                    let gy = gr[c] * vg.data[c];
                    o[c] = (gy - mean_gy - xhat * mean_gy_xhat) * inv;
                }
            }
            accumulate(inputs, *x, gx);
            accumulate(inputs, *gain, ggain);
            accumulate(inputs, *bias, gbias);
        }
        Op::MeanRows(x) => {
            let n = inputs[*x].value.rows;
            let mut gx = Mat::zeros(n, g.cols);
            for r in 0..n {
                for c in 0..g.cols {
                    gx.data[r * g.cols + c] = g.data[c] / n as f64;
                }
            }
            accumulate(inputs, *x, gx);
        }
        Op::SumAll(x) => {
            let vx = &inputs[*x].value;
            let mut gx = Mat::zeros(vx.rows, vx.cols);
            for v in gx.data.iter_mut() {
                *v = g.data[0];
            }
            accumulate(inputs, *x, gx);
        }
        Op::ConcatRows(ids) => {
            let mut start = 0;
            for &id in ids {
                let n = inputs[id].value.rows;
                let mut gi = Mat::zeros(n, g.cols);
                gi.data
                    .copy_from_slice(&g.data[start * g.cols..(start + n) * g.cols]);
                accumulate(inputs, id, gi);
                start += n;
            }
        }
        Op::ConcatCols(ids) => {
            let mut start = 0;
            for &id in ids {
                let w = inputs[id].value.cols;
                let mut gi = Mat::zeros(g.rows, w);
                for r in 0..g.rows {
                    gi.row_mut(r).copy_from_slice(&g.row(r)[start..start + w]);
                }
                accumulate(inputs, id, gi);
                start += w;
            }
        }
        Op::SliceRows { x, start, len } => {
            let vx = &inputs[*x].value;
            let mut gx = Mat::zeros(vx.rows, vx.cols);
            for r in 0..*len {
                gx.row_mut(start + r).copy_from_slice(g.row(r));
            }
            accumulate(inputs, *x, gx);
        }
        Op::GatherRows { table, indices } => {
            let vt = &inputs[*table].value;
            let mut gt = Mat::zeros(vt.rows, vt.cols);
            // Duplicate indices accumulate, matching d(sum of copies)/d(row).
            for (r, &idx) in indices.iter().enumerate() {
                let src = g.row(r);
                let dst = gt.row_mut(idx);
                for c in 0..vt.cols {
                    dst[c] += src[c];
                }
            }
            accumulate(inputs, *table, gt);
        }
        Op::SymApply { x, map } => {
            accumulate(inputs, *x, map.apply(g));
        }
        Op::BceSum { probs, targets } => {
            let p = &inputs[*probs].value;
            let y = &inputs[*targets].value;
            let scale = g.data[0];
            let mut gp = Mat::zeros(p.rows, p.cols);
            let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
            for k in 0..p.data.len() {
                let raw = p.data[k];
                if raw <= lo || raw >= hi {
                    continue; // clamped flat region
                }
                gp.data[k] = scale * (raw - y.data[k]) / (raw * (1.0 - raw));
            }
            accumulate(inputs, *probs, gp);
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Tensor<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn rows(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.rows
    }

    pub fn cols(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.cols
    }

    pub fn value(&self) -> Mat {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Read the forward value without cloning.
    pub fn with_value<R>(&self, f: impl FnOnce(&Mat) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn add(&self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
        let value = a.add(b)?;
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(Op::Add(self.id, other.id), value, rg))
    }

    /// Broadcast-add a 1×d row to every row of an n×d tensor.
    pub fn add_row(&self, row: Tensor<'t>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let (x, r) = (&nodes[self.id].value, &nodes[row.id].value);
        if r.rows != 1 || r.cols != x.cols {
            return Err(Error::Contract(format!(
                "add_row needs a 1x{} row, got {}x{}",
                x.cols, r.rows, r.cols
            )));
        }
        let mut value = x.clone();
        for i in 0..value.rows {
            let vr = value.row_mut(i);
            for c in 0..vr.len() {
                vr[c] += r.data[c];
            }
        }
        let rg = nodes[self.id].requires_grad || nodes[row.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(Op::AddRow(self.id, row.id), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Error::Contract(format!(
                "mul shapes {}x{} vs {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let mut value = a.clone();
        for (v, &w) in value.data.iter_mut().zip(b.data.iter()) {
            *v *= w;
        }
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(Op::Mul(self.id, other.id), value, rg))
    }

    pub fn scale(&self, s: f64) -> Tensor<'t> {
        let value = self.tape.nodes.borrow()[self.id].value.scale(s);
        let rg = self.tape.nodes.borrow()[self.id].requires_grad;
        self.tape.push(Op::Scale(self.id, s), value, rg)
    }

    pub fn matmul(&self, other: Tensor<'t>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let value = nodes[self.id].value.matmul(&nodes[other.id].value)?;
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(Op::Matmul(self.id, other.id), value, rg))
    }

    pub fn transpose(&self) -> Tensor<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (nodes[self.id].value.transpose(), nodes[self.id].requires_grad)
        };
        self.tape.push(Op::Transpose(self.id), value, rg)
    }

    pub fn relu(&self) -> Tensor<'t> {
        let (mut value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (nodes[self.id].value.clone(), nodes[self.id].requires_grad)
        };
        for v in value.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.tape.push(Op::Relu(self.id), value, rg)
    }

    pub fn silu(&self) -> Tensor<'t> {
        let (mut value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (nodes[self.id].value.clone(), nodes[self.id].requires_grad)
        };
        for v in value.data.iter_mut() {
            *v *= sigmoid(*v);
        }
        self.tape.push(Op::Silu(self.id), value, rg)
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax_rows(&self) -> Tensor<'t> {
        let (mut value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (nodes[self.id].value.clone(), nodes[self.id].requires_grad)
        };
        for r in 0..value.rows {
            let row = value.row_mut(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.tape.push(Op::SoftmaxRows(self.id), value, rg)
    }

    /// Row-wise layer normalization with learnable gain and bias (both 1×d).
    pub fn layer_norm(&self, gain: Tensor<'t>, bias: Tensor<'t>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].value;
        let (vg, vb) = (&nodes[gain.id].value, &nodes[bias.id].value);
        if vg.rows != 1 || vg.cols != x.cols || vb.rows != 1 || vb.cols != x.cols {
            return Err(Error::Contract(format!(
                "layer_norm gain/bias must be 1x{}, got {}x{} and {}x{}",
                x.cols, vg.rows, vg.cols, vb.rows, vb.cols
            )));
        }
        let d = x.cols as f64;
        let mut value = x.clone();
        for r in 0..value.rows {
            let row = value.row_mut(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for c in 0..row.len() {
                row[c] = (row[c] - mean) * inv * vg.data[c] + vb.data[c];
            }
        }
        let rg = nodes[self.id].requires_grad
            || nodes[gain.id].requires_grad
            || nodes[bias.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(Op::LayerNorm { x: self.id, gain: gain.id, bias: bias.id }, value, rg))
    }

    /// Column means over all rows: n×d → 1×d.
    pub fn mean_rows(&self) -> Tensor<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let mut out = Mat::zeros(1, x.cols);
            for r in 0..x.rows {
                for c in 0..x.cols {
                    out.data[c] += x.at(r, c);
                }
            }
            for v in out.data.iter_mut() {
                *v /= x.rows as f64;
            }
            (out, nodes[self.id].requires_grad)
        };
        self.tape.push(Op::MeanRows(self.id), value, rg)
    }

    /// Sum of all entries: n×d → 1×1.
    pub fn sum_all(&self) -> Tensor<'t> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            let s: f64 = nodes[self.id].value.data.iter().sum();
            (Mat::from_vec(1, 1, vec![s]).unwrap(), nodes[self.id].requires_grad)
        };
        self.tape.push(Op::SumAll(self.id), value, rg)
    }

    /// Rows `start..start+len`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].value;
        if start + len > x.rows || len == 0 {
            return Err(Error::Contract(format!(
                "slice_rows {start}..{} outside {} rows",
                start + len,
                x.rows
            )));
        }
        let mut value = Mat::zeros(len, x.cols);
        value
            .data
            .copy_from_slice(&x.data[start * x.cols..(start + len) * x.cols]);
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self
            .tape
            .push(Op::SliceRows { x: self.id, start, len }, value, rg))
    }

    /// Apply a symmetric operator to the rows; backward applies the same
    /// operator to the upstream gradient.
    pub fn sym_apply(&self, map: Rc<dyn SymmetricMap>) -> Result<Tensor<'t>> {
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].value;
        if x.rows != map.dim() {
            return Err(Error::Contract(format!(
                "sym_apply: operator dimension {} vs {} rows",
                map.dim(),
                x.rows
            )));
        }
        let value = map.apply(x);
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        Ok(self.tape.push(Op::SymApply { x: self.id, map }, value, rg))
    }
}

/// Stack tensors vertically. All must share a column count.
pub fn concat_rows<'t>(tape: &'t Tape, parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
    if parts.is_empty() {
        return Err(Error::Contract("concat_rows of nothing".into()));
    }
    let nodes = tape.nodes.borrow();
    let cols = nodes[parts[0].id].value.cols;
    let mut rows = 0;
    for p in parts {
        let v = &nodes[p.id].value;
        if v.cols != cols {
            return Err(Error::Contract(format!(
                "concat_rows column mismatch: {} vs {}",
                v.cols, cols
            )));
        }
        rows += v.rows;
    }
    let mut value = Mat::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        let v = &nodes[p.id].value;
        value.data[at * cols..(at + v.rows) * cols].copy_from_slice(&v.data);
        at += v.rows;
    }
    let rg = parts.iter().any(|p| nodes[p.id].requires_grad);
    let ids = parts.iter().map(|p| p.id).collect();
    drop(nodes);
    Ok(tape.push(Op::ConcatRows(ids), value, rg))
}

/// Stack tensors horizontally. All must share a row count.
pub fn concat_cols<'t>(tape: &'t Tape, parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
    if parts.is_empty() {
        return Err(Error::Contract("concat_cols of nothing".into()));
    }
    let nodes = tape.nodes.borrow();
    let rows = nodes[parts[0].id].value.rows;
    let mut cols = 0;
    for p in parts {
        let v = &nodes[p.id].value;
        if v.rows != rows {
            return Err(Error::Contract(format!(
                "concat_cols row mismatch: {} vs {}",
                v.rows, rows
            )));
        }
        cols += v.cols;
    }
    let mut value = Mat::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        let v = &nodes[p.id].value;
        for r in 0..rows {
            value.row_mut(r)[at..at + v.cols].copy_from_slice(v.row(r));
        }
        at += v.cols;
    }
    let rg = parts.iter().any(|p| nodes[p.id].requires_grad);
    let ids = parts.iter().map(|p| p.id).collect();
    drop(nodes);
    Ok(tape.push(Op::ConcatCols(ids), value, rg))
}

/// Row lookup into a table tensor; duplicate indices accumulate gradient.
pub fn gather_rows<'t>(tape: &'t Tape, table: Tensor<'t>, indices: &[usize]) -> Result<Tensor<'t>> {
    if indices.is_empty() {
        return Err(Error::Contract("gather_rows with no indices".into()));
    }
    let nodes = tape.nodes.borrow();
    let t = &nodes[table.id].value;
    let mut value = Mat::zeros(indices.len(), t.cols);
    for (r, &idx) in indices.iter().enumerate() {
        if idx >= t.rows {
            return Err(Error::Contract(format!(
                "gather_rows index {idx} outside table with {} rows",
                t.rows
            )));
        }
        value.row_mut(r).copy_from_slice(t.row(idx));
    }
    let rg = nodes[table.id].requires_grad;
    drop(nodes);
    Ok(tape.push(Op::GatherRows { table: table.id, indices: indices.to_vec() }, value, rg))
}

/// Summed per-entry binary cross-entropy between probability and target
/// matrices of equal shape, with probabilities clamped to
/// [BCE_CLAMP, 1−BCE_CLAMP] before the logs. Returns a 1×1 tensor.
pub fn bce_sum<'t>(tape: &'t Tape, probs: Tensor<'t>, targets: Tensor<'t>) -> Result<Tensor<'t>> {
    let nodes = tape.nodes.borrow();
    let p = &nodes[probs.id].value;
    let y = &nodes[targets.id].value;
    if p.rows != y.rows || p.cols != y.cols {
        return Err(Error::Contract(format!(
            "bce_sum shapes {}x{} vs {}x{}",
            p.rows, p.cols, y.rows, y.cols
        )));
    }
    let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
    let mut total = 0.0;
    for k in 0..p.data.len() {
        let pc = p.data[k].clamp(lo, hi);
        let yk = y.data[k];
        total -= yk * pc.ln() + (1.0 - yk) * (1.0 - pc).ln();
    }
    let rg = nodes[probs.id].requires_grad;
    drop(nodes);
    Ok(tape.push(
        Op::BceSum { probs: probs.id, targets: targets.id },
        Mat::from_vec(1, 1, vec![total]).unwrap(),
        rg,
    ))
}
