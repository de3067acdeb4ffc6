//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation executed during one forward pass.
//! [`Tape::backward`] consumes it, replays the record in reverse and returns
//! the gradients of all leaves that were created with `requires_grad`.

use crate::error::{NumError, Result};
use crate::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Log(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Transpose(Var),
    Sum(Var),
    MeanRows(Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    MixRows(Var, Vec<Vec<(usize, f64)>>),
    PickCols(Var, Vec<usize>),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Single-use record of a forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the leaves of a consumed tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` does not require grad or does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let rg = self.rg(inputs);
        self.push(value, rg, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.record(out, &[a, b], Op::MatMul(a, b)))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.record(out, &[a, b], Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.record(out, &[a, b], Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.record(out, &[a, b], Op::Mul(a, b)))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("div", a, b, |x, y| x / y)?;
        Ok(self.record(out, &[a, b], Op::Div(a, b)))
    }

    /// Adds the 1xn row `b` to every row of the mxn `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.rows() != 1 || tb.cols() != tx.cols() {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        Ok(self.record(out, &[x, b], Op::AddRow(x, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.record(out, &[x], Op::Scale(x, s))
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.record(out, &[x], Op::Offset(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.record(out, &[x], Op::Tanh(x))
    }

    /// Natural log; the caller keeps inputs positive.
    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        self.record(out, &[x], Op::Log(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::sqrt);
        self.record(out, &[x], Op::Sqrt(x))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the input lies outside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.record(out, &[x], Op::Clamp(x, lo, hi))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows_value(self.value(x));
        self.record(out, &[x], Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut out = tx.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.record(out, &[x], Op::LogSoftmaxRows(x))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.record(out, &[x], Op::Transpose(x))
    }

    /// Sum of all entries as a 1x1 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.record(out, &[x], Op::Sum(x))
    }

    /// Mean of all entries as a 1x1 tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Column-wise mean over rows: mxn -> 1xn.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() == 0 {
            return Err(NumError::Invalid("mean_rows of an empty tensor".into()));
        }
        let mut out = Tensor::zeros(1, tx.cols());
        for r in 0..tx.rows() {
            for (o, &v) in out.data_mut().iter_mut().zip(tx.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / tx.rows() as f64;
        let out = out.map(|v| v * inv);
        Ok(self.record(out, &[x], Op::MeanRows(x)))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(x).reshape(rows, cols)?;
        Ok(self.record(out, &[x], Op::Reshape(x)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::Invalid("concat_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.record(out, parts, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::Invalid("concat_cols of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[c0..c0 + t.cols()].copy_from_slice(t.row(r));
            }
            c0 += t.cols();
        }
        Ok(self.record(out, parts, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.rows() {
            return Err(NumError::Index {
                op: "slice_rows",
                index: start + len,
                len: tx.rows(),
            });
        }
        let c = tx.cols();
        let out = Tensor::new(len, c, tx.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.record(out, &[x], Op::SliceRows(x, start)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.cols() {
            return Err(NumError::Index {
                op: "slice_cols",
                index: start + len,
                len: tx.cols(),
            });
        }
        let out = Tensor::from_fn(tx.rows(), len, |r, c| tx.get(r, start + c));
        Ok(self.record(out, &[x], Op::SliceCols(x, start)))
    }

    /// Rows of `x` in the given order; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let mut data = Vec::with_capacity(indices.len() * tx.cols());
        for &i in indices {
            if i >= tx.rows() {
                return Err(NumError::Index {
                    op: "gather_rows",
                    index: i,
                    len: tx.rows(),
                });
            }
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::new(indices.len(), tx.cols(), data)?;
        Ok(self.record(out, &[x], Op::GatherRows(x, indices.to_vec())))
    }

    /// Output row `i` is `Σ w · x[j]` over the `(j, w)` pairs of `weights[i]`.
    pub fn mix_rows(&mut self, x: Var, weights: &[Vec<(usize, f64)>]) -> Result<Var> {
        let tx = self.value(x);
        let mut out = Tensor::zeros(weights.len(), tx.cols());
        for (i, terms) in weights.iter().enumerate() {
            for &(j, w) in terms {
                if j >= tx.rows() {
                    return Err(NumError::Index {
                        op: "mix_rows",
                        index: j,
                        len: tx.rows(),
                    });
                }
                for (o, &v) in out.row_mut(i).iter_mut().zip(tx.row(j)) {
                    *o += w * v;
                }
            }
        }
        Ok(self.record(out, &[x], Op::MixRows(x, weights.to_vec())))
    }

    /// Picks `x[i, cols[i]]` for every row: mxn -> mx1.
    pub fn pick_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if cols.len() != tx.rows() {
            return Err(NumError::Invalid(format!(
                "pick_cols: {} indices for {} rows",
                cols.len(),
                tx.rows()
            )));
        }
        let mut data = Vec::with_capacity(cols.len());
        for (r, &c) in cols.iter().enumerate() {
            if c >= tx.cols() {
                return Err(NumError::Index {
                    op: "pick_cols",
                    index: c,
                    len: tx.cols(),
                });
            }
            data.push(tx.get(r, c));
        }
        let out = Tensor::new(cols.len(), 1, data)?;
        Ok(self.record(out, &[x], Op::PickCols(x, cols.to_vec())))
    }

    /// Consumes the tape and returns d(loss)/d(leaf) for every leaf created
    /// with [`Tape::leaf`] that the loss depends on.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.value(loss).shape();
        if (r, c) != (1, 1) {
            return Err(NumError::NonScalarLoss(r, c));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            propagate(&nodes, node, &g, &mut grads);
        }

        // Only leaves keep gradients; interior slots were consumed above.
        Ok(Gradients { grads })
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |v: Var| &nodes[v.0].value;
    let rg = |v: Var| nodes[v.0].requires_grad;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if rg(*a) {
                let mut ga = Tensor::zeros(val(*a).rows(), val(*a).cols());
                matmul_nt_acc(g, val(*b), &mut ga);
                accumulate(nodes, grads, *a, ga);
            }
            if rg(*b) {
                let mut gb = Tensor::zeros(val(*b).rows(), val(*b).cols());
                matmul_tn_acc(val(*a), g, &mut gb);
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, g.clone());
            accumulate(nodes, grads, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            if rg(*a) {
                accumulate(nodes, grads, *a, zip(g, val(*b), |gv, bv| gv * bv));
            }
            if rg(*b) {
                accumulate(nodes, grads, *b, zip(g, val(*a), |gv, av| gv * av));
            }
        }
        Op::Div(a, b) => {
            if rg(*a) {
                accumulate(nodes, grads, *a, zip(g, val(*b), |gv, bv| gv / bv));
            }
            if rg(*b) {
                // d(a/b)/db = -y / b
                let gy = zip(g, y, |gv, yv| gv * yv);
                accumulate(nodes, grads, *b, zip(&gy, val(*b), |t, bv| -t / bv));
            }
        }
        Op::AddRow(x, b) => {
            accumulate(nodes, grads, *x, g.clone());
            if rg(*b) {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::Scale(x, s) => accumulate(nodes, grads, *x, g.map(|v| v * s)),
        Op::Offset(x) | Op::Reshape(x) => {
            let shape = val(*x).shape();
            let gx = Tensor::new(shape.0, shape.1, g.data().to_vec()).expect("shape preserved");
            accumulate(nodes, grads, *x, gx);
        }
        Op::Tanh(x) => accumulate(nodes, grads, *x, zip(g, y, |gv, yv| gv * (1.0 - yv * yv))),
        Op::Log(x) => accumulate(nodes, grads, *x, zip(g, val(*x), |gv, xv| gv / xv)),
        Op::Sqrt(x) => accumulate(nodes, grads, *x, zip(g, y, |gv, yv| gv * 0.5 / yv)),
        Op::Clamp(x, lo, hi) => {
            let gx = zip(
                g,
                val(*x),
                |gv, xv| if xv < *lo || xv > *hi { 0.0 } else { gv },
            );
            accumulate(nodes, grads, *x, gx);
        }
        Op::SoftmaxRows(x) => {
            let mut gx = Tensor::zeros(g.rows(), g.cols());
            for r in 0..g.rows() {
                let (gr, yr) = (g.row(r), y.row(r));
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                for ((o, &gv), &yv) in gx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                    *o = yv * (gv - dot);
                }
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::LogSoftmaxRows(x) => {
            let mut gx = Tensor::zeros(g.rows(), g.cols());
            for r in 0..g.rows() {
                let (gr, yr) = (g.row(r), y.row(r));
                let total: f64 = gr.iter().sum();
                for ((o, &gv), &yv) in gx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                    *o = gv - yv.exp() * total;
                }
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::Transpose(x) => accumulate(nodes, grads, *x, g.transpose()),
        Op::Sum(x) => {
            let (r, c) = val(*x).shape();
            accumulate(nodes, grads, *x, Tensor::full(r, c, g.item()));
        }
        Op::MeanRows(x) => {
            let (r, c) = val(*x).shape();
            let inv = 1.0 / r as f64;
            let gx = Tensor::from_fn(r, c, |_, j| g.get(0, j) * inv);
            accumulate(nodes, grads, *x, gx);
        }
        Op::ConcatRows(parts) => {
            let mut r0 = 0;
            for &p in parts {
                let (r, c) = val(p).shape();
                if rg(p) {
                    let gp = Tensor::new(r, c, g.data()[r0 * c..(r0 + r) * c].to_vec())
                        .expect("slice of concat grad");
                    accumulate(nodes, grads, p, gp);
                }
                r0 += r;
            }
        }
        Op::ConcatCols(parts) => {
            let mut c0 = 0;
            for &p in parts {
                let (r, c) = val(p).shape();
                if rg(p) {
                    let gp = Tensor::from_fn(r, c, |i, j| g.get(i, c0 + j));
                    accumulate(nodes, grads, p, gp);
                }
                c0 += c;
            }
        }
        Op::SliceRows(x, start) => {
            let (r, c) = val(*x).shape();
            let mut gx = Tensor::zeros(r, c);
            gx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
            accumulate(nodes, grads, *x, gx);
        }
        Op::SliceCols(x, start) => {
            let (r, c) = val(*x).shape();
            let mut gx = Tensor::zeros(r, c);
            for i in 0..r {
                gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::GatherRows(x, idx) => {
            let (r, c) = val(*x).shape();
            let mut gx = Tensor::zeros(r, c);
            for (o, &i) in idx.iter().enumerate() {
                for (a, &b) in gx.row_mut(i).iter_mut().zip(g.row(o)) {
                    *a += b;
                }
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::MixRows(x, weights) => {
            let (r, c) = val(*x).shape();
            let mut gx = Tensor::zeros(r, c);
            for (o, terms) in weights.iter().enumerate() {
                for &(j, w) in terms {
                    for (a, &b) in gx.row_mut(j).iter_mut().zip(g.row(o)) {
                        *a += w * b;
                    }
                }
            }
            accumulate(nodes, grads, *x, gx);
        }
        Op::PickCols(x, cols) => {
            let (r, c) = val(*x).shape();
            let mut gx = Tensor::zeros(r, c);
            for (i, &j) in cols.iter().enumerate() {
                gx.set(i, j, g.get(i, 0));
            }
            accumulate(nodes, grads, *x, gx);
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows_value(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = tape.constant(t(&[&[1.0], &[1.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &t(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn matmul_shape_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(NumError::Shape { .. })));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 2));
        assert!(matches!(
            tape.backward(a),
            Err(NumError::NonScalarLoss(2, 2))
        ));
    }

    #[test]
    fn constant_loss_has_no_gradients() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::full(2, 2, 3.0));
        let s = tape.sum(a);
        let grads = tape.backward(s).unwrap();
        assert!(grads.get(a).is_none());
    }

    #[test]
    fn sum_of_product_grad_is_other_factor() {
        let mut tape = Tape::new();
        let av = t(&[&[1.0, -2.0], &[0.5, 4.0]]);
        let bv = t(&[&[3.0, 0.25], &[-1.0, 2.0]]);
        let a = tape.leaf(av.clone());
        let b = tape.leaf(bv.clone());
        let p = tape.mul(a, b).unwrap();
        let s = tape.sum(p);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(a).unwrap(), &bv);
        assert_eq!(grads.get(b).unwrap(), &av);
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x) + sum(x) -> grad 2 everywhere
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(1, 3, 0.7));
        let s1 = tape.sum(x);
        let s2 = tape.sum(x);
        let l = tape.add(s1, s2).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::full(1, 3, 2.0));
    }

    #[test]
    fn softmax_closed_form() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(&[0.0, 2f64.ln()]));
        let y = tape.softmax_rows(x);
        let out = tape.value(y);
        assert!((out.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((out.get(0, 1) - 2.0 / 3.0).abs() < 1e-15);

        let c = tape.constant(Tensor::full(2, 5, -7.25));
        let u = tape.softmax_rows(c);
        for v in tape.value(u).data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let out = softmax_rows_value(&Tensor::row_vector(&[1000.0, 1000.0, -1e30]));
        assert_eq!(out.data(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn slicing_errors_out_of_range() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 2));
        assert!(tape.slice_rows(x, 2, 2).is_err());
        assert!(tape.slice_cols(x, 1, 2).is_err());
        assert!(tape.gather_rows(x, &[3]).is_err());
        assert!(tape.pick_cols(x, &[0, 0, 2]).is_err());
    }
}
