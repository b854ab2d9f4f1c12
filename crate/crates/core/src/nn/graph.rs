//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! Every node's value is checked for finiteness when it is recorded, so a
//! NaN or infinity surfaces as an error at the operation that produced it.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Sqrt(Var),
    Recip(Var),
    PowI(Var, i32),
    ClampMin(Var, f64),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    RepeatRows(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    LayerNorm(Var, Vec<f64>),
    Huber(Var, Tensor, f64),
    SoftCrossEntropy(Var, Tensor, Tensor),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A recording of one forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
}

/// Gradients of a scalar with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-libm::fabs(x)))
}

fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, f64::from(n))
}

fn huber(e: f64, delta: f64) -> f64 {
    let a = libm::fabs(e);
    if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn softmax_row(row: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let live = |j: usize| mask.is_none_or(|m| m[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(j, _)| live(*j))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(j, v)| if live(j) { libm::exp(v - max) } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

impl Graph {
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

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (l, r) = (self.shape(a), self.shape(b));
        if l != r {
            return Err(Error::Shape { op, left: l, right: r });
        }
        Ok(())
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, "input")
    }

    /// Adds a parameter from `store`, reusing the node if already present.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if self.params.len() < store.len() {
            self.params.resize(store.len(), None);
        }
        if let Some(v) = self.params[id.index()] {
            return Ok(v);
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), "param")?;
        self.params[id.index()] = Some(v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (l, r) = (self.shape(a), self.shape(b));
        if l[1] != r[0] {
            return Err(Error::Shape {
                op: "matmul",
                left: l,
                right: r,
            });
        }
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b), "mul")
    }

    fn broadcast(
        &mut self,
        x: Var,
        b: Var,
        row: bool,
        op: Op,
        name: &'static str,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        let ok = if row { bs == [1, xs[1]] } else { bs == [xs[0], 1] };
        if !ok {
            return Err(Error::Shape {
                op: name,
                left: xs,
                right: bs,
            });
        }
        let mut value = self.value(x).clone();
        let bv = self.value(b).data().to_vec();
        let cols = xs[1];
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            let k = if row { i % cols } else { i / cols };
            *v = f(*v, bv[k]);
        }
        self.push(value, op, name)
    }

    /// `x + b` with `b` a row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        self.broadcast(x, b, true, Op::AddRow(x, b), "add_row", |a, b| a + b)
    }

    /// `x * g` elementwise with `g` a row broadcast over the rows of `x`.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        self.broadcast(x, g, true, Op::MulRow(x, g), "mul_row", |a, b| a * b)
    }

    /// Scales each row of `x` by the matching entry of column `c`.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        self.broadcast(x, c, false, Op::MulCol(x, c), "mul_col", |a, b| a * b)
    }

    /// `x * s` with `s` a 1x1 node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.shape(s) != [1, 1] {
            return Err(Error::Shape {
                op: "mul_scalar",
                left: self.shape(x),
                right: self.shape(s),
            });
        }
        let k = self.scalar(s);
        let value = self.value(x).map(|v| v * k);
        self.push(value, Op::MulScalar(x, s), "mul_scalar")
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v * k);
        self.push(value, Op::Scale(x, k), "scale")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(libm::tanh);
        self.push(value, Op::Tanh(x), "tanh")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), "sigmoid")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), "relu")
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(softplus);
        self.push(value, Op::Softplus(x), "softplus")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(libm::exp);
        self.push(value, Op::Exp(x), "exp")
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(libm::sqrt);
        self.push(value, Op::Sqrt(x), "sqrt")
    }

    pub fn recip(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| 1.0 / v);
        self.push(value, Op::Recip(x), "recip")
    }

    pub fn powi(&mut self, x: Var, n: i32) -> Result<Var> {
        let value = self.value(x).map(|v| powi(v, n));
        self.push(value, Op::PowI(x, n), "powi")
    }

    /// `max(x, lo)`; the gradient is zero where the clamp is active.
    pub fn clamp_min(&mut self, x: Var, lo: f64) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(lo));
        self.push(value, Op::ClampMin(x, lo), "clamp_min")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), "sum")
    }

    /// Column sums, as a single row. Rows are added in order.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            out.iter_mut().zip(t.row_slice(r)).for_each(|(o, v)| *o += v);
        }
        self.push(Tensor::row(&out), Op::SumRows(x), "sum_rows")
    }

    /// Row sums, as a single column.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        self.push(Tensor::column(&out), Op::SumCols(x), "sum_cols")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x), "transpose")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for p in parts {
            let s = self.shape(*p);
            if s[0] != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: self.shape(parts[0]),
                    right: s,
                });
            }
            cols += s[1];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatCols(parts.to_vec()),
            "concat_cols",
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let s = self.shape(*p);
            if s[1] != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: self.shape(parts[0]),
                    right: s,
                });
            }
            rows += s[0];
            data.extend_from_slice(self.value(*p).data());
        }
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatRows(parts.to_vec()),
            "concat_rows",
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if start + len > cols {
            return Err(Error::Shape {
                op: "slice_cols",
                left: [rows, cols],
                right: [start, len],
            });
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        self.push(Tensor::new(rows, len, data)?, Op::SliceCols(x, start), "slice_cols")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if start + len > rows {
            return Err(Error::Shape {
                op: "slice_rows",
                left: [rows, cols],
                right: [start, len],
            });
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        self.push(Tensor::new(len, cols, data)?, Op::SliceRows(x, start), "slice_rows")
    }

    /// Stacks `n` copies of the single-row `x`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let s = self.shape(x);
        if s[0] != 1 {
            return Err(Error::Shape {
                op: "repeat_rows",
                left: s,
                right: [1, s[1]],
            });
        }
        let row = self.value(x).data().to_vec();
        let data: Vec<f64> = (0..n).flat_map(|_| row.iter().copied()).collect();
        self.push(Tensor::new(n, s[1], data)?, Op::RepeatRows(x), "repeat_rows")
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let s = self.shape(x);
        if s[0] * s[1] != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                left: s,
                right: [rows, cols],
            });
        }
        let data = self.value(x).data().to_vec();
        self.push(Tensor::new(rows, cols, data)?, Op::Reshape(x), "reshape")
    }

    /// Row-wise softmax. Columns with `mask[j] == false` get exactly zero
    /// weight; a fully masked row is an error.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(Error::Shape {
                    op: "softmax_rows",
                    left: [rows, cols],
                    right: [1, m.len()],
                });
            }
            if !m.iter().any(|v| *v) {
                return Err(Error::DegenerateAttention { query: 0 });
            }
        }
        let t = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(softmax_row(t.row_slice(r), mask));
        }
        self.push(Tensor::new(rows, cols, data)?, Op::SoftmaxRows(x), "softmax_rows")
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        let t = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = t.row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            inv_std.push(inv);
            data.extend(row.iter().map(|v| (v - mean) * inv));
        }
        self.push(Tensor::new(rows, cols, data)?, Op::LayerNorm(x, inv_std), "layer_norm")
    }

    /// Summed Huber loss of `x - target`.
    pub fn huber(&mut self, x: Var, target: &Tensor, delta: f64) -> Result<Var> {
        if self.shape(x) != target.shape() {
            return Err(Error::Shape {
                op: "huber",
                left: self.shape(x),
                right: target.shape(),
            });
        }
        let loss: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| huber(a - b, delta))
            .sum();
        self.push(Tensor::scalar(loss), Op::Huber(x, target.clone(), delta), "huber")
    }

    /// `-sum(target * log_softmax(logits))` over all rows.
    pub fn soft_cross_entropy(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let [rows, cols] = self.shape(logits);
        if target.shape() != [rows, cols] {
            return Err(Error::Shape {
                op: "soft_cross_entropy",
                left: [rows, cols],
                right: target.shape(),
            });
        }
        let z = self.value(logits);
        let mut probs = Vec::with_capacity(rows * cols);
        let mut loss = 0.0;
        for r in 0..rows {
            let row = z.row_slice(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            for (c, v) in row.iter().enumerate() {
                let t = target.at(r, c);
                if t != 0.0 {
                    loss -= t * (v - lse);
                }
                probs.push(libm::exp(v - lse));
            }
        }
        let probs = Tensor::new(rows, cols, probs)?;
        self.push(
            Tensor::scalar(loss),
            Op::SoftCrossEntropy(logits, target.clone(), probs),
            "soft_cross_entropy",
        )
    }

    /// Back-propagates from the 1x1 node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(loss),
                right: [1, 1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of every parameter node into `store`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.grad_mut(*id).add_assign(g);
            }
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let val = |v: &Var| &self.nodes[v.0].value;
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(val(b)));
                accumulate(grads, *b, val(a).t_matmul(g));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(a), |x, y| x * y));
            }
            Op::AddRow(x, b) => {
                accumulate(grads, *x, g.clone());
                accumulate(grads, *b, column_sums(g));
            }
            Op::MulRow(x, r) => {
                let rv = val(r).data();
                let cols = g.cols();
                let mut gx = g.clone();
                gx.data_mut()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v *= rv[k % cols]);
                accumulate(grads, *x, gx);
                accumulate(grads, *r, column_sums(&g.zip_map(val(x), |a, b| a * b)));
            }
            Op::MulCol(x, c) => {
                let cv = val(c).data();
                let cols = g.cols();
                let mut gx = g.clone();
                gx.data_mut()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v *= cv[k / cols]);
                accumulate(grads, *x, gx);
                let prod = g.zip_map(val(x), |a, b| a * b);
                let gc: Vec<f64> = (0..prod.rows()).map(|r| prod.row_slice(r).iter().sum()).collect();
                accumulate(grads, *c, Tensor::column(&gc));
            }
            Op::MulScalar(x, s) => {
                let k = val(s).data()[0];
                accumulate(grads, *x, g.map(|v| v * k));
                let gs: f64 = g.data().iter().zip(val(x).data()).map(|(a, b)| a * b).sum();
                accumulate(grads, *s, Tensor::scalar(gs));
            }
            Op::Scale(x, k) => accumulate(grads, *x, g.map(|v| v * k)),
            Op::Tanh(x) => accumulate(grads, *x, g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::Sigmoid(x) => accumulate(grads, *x, g.zip_map(out, |gv, y| gv * y * (1.0 - y))),
            Op::Relu(x) => accumulate(grads, *x, g.zip_map(val(x), |gv, v| if v > 0.0 { gv } else { 0.0 })),
            Op::Softplus(x) => accumulate(grads, *x, g.zip_map(val(x), |gv, v| gv * sigmoid(v))),
            Op::Exp(x) => accumulate(grads, *x, g.zip_map(out, |gv, y| gv * y)),
            Op::Sqrt(x) => accumulate(grads, *x, g.zip_map(out, |gv, y| gv * 0.5 / y)),
            Op::Recip(x) => accumulate(grads, *x, g.zip_map(out, |gv, y| -gv * y * y)),
            Op::PowI(x, n) => {
                let n = *n;
                accumulate(grads, *x, g.zip_map(val(x), |gv, v| gv * f64::from(n) * powi(v, n - 1)));
            }
            Op::ClampMin(x, lo) => {
                let lo = *lo;
                accumulate(grads, *x, g.zip_map(val(x), |gv, v| if v > lo { gv } else { 0.0 }));
            }
            Op::Sum(x) => {
                let s = val(x).shape();
                accumulate(grads, *x, Tensor::filled(s[0], s[1], g.data()[0]));
            }
            Op::SumRows(x) => {
                let rows = val(x).rows();
                let data: Vec<f64> = (0..rows).flat_map(|_| g.data().iter().copied()).collect();
                accumulate(grads, *x, Tensor::new(rows, g.cols(), data).expect("shape"));
            }
            Op::SumCols(x) => {
                let cols = val(x).cols();
                let data: Vec<f64> = g.data().iter().flat_map(|v| core::iter::repeat_n(*v, cols)).collect();
                accumulate(grads, *x, Tensor::new(g.rows(), cols, data).expect("shape"));
            }
            Op::Transpose(x) => accumulate(grads, *x, g.transpose()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let [rows, cols] = val(p).shape();
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + cols]);
                    }
                    accumulate(grads, *p, Tensor::new(rows, cols, data).expect("shape"));
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let [rows, cols] = val(p).shape();
                    let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    accumulate(grads, *p, Tensor::new(rows, cols, data).expect("shape"));
                    offset += rows;
                }
            }
            Op::SliceCols(x, start) => {
                let [rows, cols] = val(x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for (c, v) in g.row_slice(r).iter().enumerate() {
                        gx.set(r, start + c, *v);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceRows(x, start) => {
                let [rows, cols] = val(x).shape();
                let mut gx = Tensor::zeros(rows, cols);
                gx.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                accumulate(grads, *x, gx);
            }
            Op::RepeatRows(x) => accumulate(grads, *x, column_sums(g)),
            Op::Reshape(x) => {
                let [rows, cols] = val(x).shape();
                accumulate(grads, *x, Tensor::new(rows, cols, g.data().to_vec()).expect("shape"));
            }
            Op::SoftmaxRows(x) => {
                let [rows, cols] = out.shape();
                let mut gx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let y = out.row_slice(r);
                    let gy = g.row_slice(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        gx.set(r, c, y[c] * (gy[c] - dot));
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::LayerNorm(x, inv_std) => {
                let [rows, cols] = out.shape();
                let n = cols as f64;
                let mut gx = Tensor::zeros(rows, cols);
                for (r, s) in inv_std.iter().enumerate() {
                    let y = out.row_slice(r);
                    let gy = g.row_slice(r);
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..cols {
                        gx.set(r, c, s * (gy[c] - mean_g - y[c] * mean_gy));
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Huber(x, target, delta) => {
                let d = *delta;
                let k = g.data()[0];
                let gx = val(x).zip_map(target, |a, b| k * (a - b).clamp(-d, d));
                accumulate(grads, *x, gx);
            }
            Op::SoftCrossEntropy(logits, target, probs) => {
                let [rows, cols] = probs.shape();
                let k = g.data()[0];
                let mut gz = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let mass: f64 = target.row_slice(r).iter().sum();
                    for c in 0..cols {
                        gz.set(r, c, k * (mass * probs.at(r, c) - target.at(r, c)));
                    }
                }
                accumulate(grads, *logits, gz);
            }
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = vec![0.0; g.cols()];
    for r in 0..g.rows() {
        out.iter_mut().zip(g.row_slice(r)).for_each(|(o, v)| *o += v);
    }
    Tensor::row(&out)
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
