//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node in creation order, so the
//! tape is already topologically sorted and `backward` is a single reverse
//! sweep. Parameters enter the graph through [`Graph::param`]; `backward`
//! adds their gradients into the owning [`ParamSet`], accumulating across
//! calls until the optimizer zeroes them.

use std::collections::HashMap;

use super::params::{ParamId, ParamSet};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    Abs(Var),
    Square(Var),
    Expm1Ratio(Var),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    RowSum(Var),
    GroupScores { q: Var, k: Var, group: usize },
    GroupMix { w: Var, h: Var, group: usize },
    RowVecMat { x: Var, w: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Arguments below this magnitude use the Taylor series of `expm1(x)/x`.
pub const EXPM1_RATIO_SERIES_BELOW: f64 = 1e-6;

/// `(e^x - 1) / x`, continuous at zero.
pub fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < EXPM1_RATIO_SERIES_BELOW {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`expm1_ratio`].
pub fn expm1_ratio_deriv(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Records operations for one forward pass.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    trainable: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl Graph {
    /// A graph whose parameters receive gradients.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
            trainable: true,
        }
    }

    /// A graph that treats parameters as constants (target networks, rollouts).
    pub fn inference() -> Self {
        Self {
            trainable: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A constant leaf. Never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Value-only copy of `v`, cut from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.input(value)
    }

    /// Binds a parameter once per graph; later calls return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let value = params.value(id).clone();
        let trainable = self.trainable;
        let v = self.push(value, Op::Param(id), trainable);
        self.bound.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = av.matmul(bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn row_broadcast(
        &mut self,
        op: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(shape_err(op, xv, rv));
        }
        let mut out = xv.clone();
        let cols = xv.cols();
        let r = rv.data();
        for chunk in out.data_mut().chunks_mut(cols.max(1)) {
            for (o, &b) in chunk.iter_mut().zip(r) {
                *o = f(*o, b);
            }
        }
        Ok(out)
    }

    /// `x + row` with `row` broadcast over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("add_row", x, row, |a, b| a + b)?;
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    /// `x * row` elementwise, `row` broadcast over every row of `x`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("mul_row", x, row, |a, b| a * b)?;
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::MulRow(x, row), rg))
    }

    /// `x W + b` for `x: [r, in]`, `W: [in, out]`, `b: [1, out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    /// `x + c` for a constant `c`.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        let rg = self.rg(x);
        self.push(out, Op::Offset(x), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, elu, Op::Elu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Elementwise `(e^x - 1) / x` with a series branch near zero.
    pub fn expm1_ratio(&mut self, x: Var) -> Var {
        self.unary(x, expm1_ratio, Op::Expm1Ratio(x))
    }

    /// Softmax over the last axis (each row).
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg)
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = &self.nodes[p.0].value;
            let pc = pv.cols();
            for r in 0..rows {
                out.data_mut()[r * cols + off..r * cols + off + pc].copy_from_slice(pv.row_slice(r));
            }
            off += pc;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start > end || end > xv.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: xv.shape(),
                rhs: (start, end),
            });
        }
        let rows = xv.rows();
        let w = end - start;
        let mut out = Tensor::zeros(rows, w);
        for r in 0..rows {
            out.data_mut()[r * w..(r + 1) * w].copy_from_slice(&xv.row_slice(r)[start..end]);
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::Slice(x, start), rg))
    }

    /// Splits the columns of `x` into two equal halves.
    pub fn split_halves(&mut self, x: Var) -> Result<(Var, Var)> {
        let cols = self.value(x).cols();
        if cols % 2 != 0 {
            return Err(Error::Shape {
                op: "split_halves",
                lhs: self.value(x).shape(),
                rhs: (cols / 2, cols - cols / 2),
            });
        }
        let a = self.slice_cols(x, 0, cols / 2)?;
        let b = self.slice_cols(x, cols / 2, cols)?;
        Ok((a, b))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != rows * cols {
            return Err(Error::Shape {
                op: "reshape",
                lhs: xv.shape(),
                rhs: (rows, cols),
            });
        }
        let out = xv.clone().reshaped(rows, cols);
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.len().max(1) as f64;
        let out = Tensor::scalar(xv.sum() / n);
        let rg = self.rg(x);
        self.push(out, Op::Mean(x), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum_squares());
        let rg = self.rg(x);
        self.push(out, Op::SumSquares(x), rg)
    }

    /// Per-row sums, `[r, c] -> [r, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let sums: Vec<f64> = (0..xv.rows()).map(|r| xv.row_slice(r).iter().sum()).collect();
        let out = Tensor::from_vec(xv.rows(), 1, sums);
        let rg = self.rg(x);
        self.push(out, Op::RowSum(x), rg)
    }

    /// Within-group dot products. Rows are laid out group-major in blocks of
    /// `group`; the result `[G*group, group]` holds `q_i . k_j` for every pair
    /// in the same block.
    pub fn group_scores(&mut self, q: Var, k: Var, group: usize) -> Result<Var> {
        let (qv, kv) = (self.value(q), self.value(k));
        if qv.shape() != kv.shape() || group == 0 || qv.rows() % group != 0 {
            return Err(shape_err("group_scores", qv, kv));
        }
        let rows = qv.rows();
        let mut out = Tensor::zeros(rows, group);
        for g in 0..rows / group {
            for i in 0..group {
                let qi = qv.row_slice(g * group + i);
                for j in 0..group {
                    let kj = kv.row_slice(g * group + j);
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    out.set(g * group + i, j, dot);
                }
            }
        }
        let rg = self.rg(q) || self.rg(k);
        Ok(self.push(out, Op::GroupScores { q, k, group }, rg))
    }

    /// Within-group weighted sums: row `i` of block `g` becomes
    /// `sum_j w[g*group+i, j] * h[g*group+j]`.
    pub fn group_mix(&mut self, w: Var, h: Var, group: usize) -> Result<Var> {
        let (wv, hv) = (self.value(w), self.value(h));
        if wv.rows() != hv.rows() || wv.cols() != group || group == 0 || hv.rows() % group != 0 {
            return Err(shape_err("group_mix", wv, hv));
        }
        let rows = hv.rows();
        let d = hv.cols();
        let mut out = Tensor::zeros(rows, d);
        for g in 0..rows / group {
            for i in 0..group {
                let r = g * group + i;
                for j in 0..group {
                    let wij = wv.get(r, j);
                    let hj = hv.row_slice(g * group + j);
                    let orow = &mut out.data_mut()[r * d..(r + 1) * d];
                    for (o, &hv) in orow.iter_mut().zip(hj) {
                        *o += wij * hv;
                    }
                }
            }
        }
        let rg = self.rg(w) || self.rg(h);
        Ok(self.push(out, Op::GroupMix { w, h, group }, rg))
    }

    /// Per-row vector-matrix product: `x: [B, n]`, `w: [B, n*m]` holding a
    /// row-major `n x m` matrix per row; result `[B, m]`.
    pub fn row_vec_mat(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let n = xv.cols();
        if xv.rows() != wv.rows() || n == 0 || wv.cols() % n != 0 {
            return Err(shape_err("row_vec_mat", xv, wv));
        }
        let m = wv.cols() / n;
        let mut out = Tensor::zeros(xv.rows(), m);
        for b in 0..xv.rows() {
            let xr = xv.row_slice(b);
            let wr = wv.row_slice(b);
            let orow = &mut out.data_mut()[b * m..(b + 1) * m];
            for (i, &xi) in xr.iter().enumerate() {
                for (o, &wic) in orow.iter_mut().zip(&wr[i * m..(i + 1) * m]) {
                    *o += xi * wic;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::RowVecMat { x, w }, rg))
    }

    /// Propagates `d loss / d node` backwards and adds parameter gradients
    /// into `params`. Gradients accumulate across calls.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss(lv.shape()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads, params);
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_with(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce() -> Tensor) {
        if self.rg(v) {
            let g = f();
            self.acc(grads, v, g);
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>], params: &mut ParamSet) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Input => {}
            Op::Param(id) => params.get_mut(*id).grad_mut().add_assign(g),
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                self.acc_with(grads, a, || {
                    let bv = self.value(b);
                    let mut ga = Tensor::zeros(g.rows(), bv.rows());
                    gemm(false, g, true, bv, &mut ga, 0.0);
                    ga
                });
                self.acc_with(grads, b, || {
                    let av = self.value(a);
                    let mut gb = Tensor::zeros(av.cols(), g.cols());
                    gemm(true, av, false, g, &mut gb, 0.0);
                    gb
                });
            }
            Op::Add(a, b) => {
                self.acc_with(grads, *a, || g.clone());
                self.acc_with(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.acc_with(grads, *a, || g.clone());
                self.acc_with(grads, *b, || g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                self.acc_with(grads, a, || g.zip_map(self.value(b), |x, y| x * y));
                self.acc_with(grads, b, || g.zip_map(self.value(a), |x, y| x * y));
            }
            Op::AddRow(x, row) => {
                self.acc_with(grads, *x, || g.clone());
                self.acc_with(grads, *row, || column_sums(g));
            }
            Op::MulRow(x, row) => {
                let (x, row) = (*x, *row);
                self.acc_with(grads, x, || {
                    let r = self.value(row).data();
                    let mut gx = g.clone();
                    let cols = gx.cols().max(1);
                    for chunk in gx.data_mut().chunks_mut(cols) {
                        for (o, &rv) in chunk.iter_mut().zip(r) {
                            *o *= rv;
                        }
                    }
                    gx
                });
                self.acc_with(grads, row, || column_sums(&g.zip_map(self.value(x), |a, b| a * b)));
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.acc_with(grads, *x, || g.map(|v| v * c));
            }
            Op::Offset(x) => self.acc_with(grads, *x, || g.clone()),
            Op::Sigmoid(x) => self.acc_with(grads, *x, || g.zip_map(out, |gv, y| gv * y * (1.0 - y))),
            Op::Softplus(x) => {
                let x = *x;
                self.acc_with(grads, x, || g.zip_map(self.value(x), |gv, xv| gv * sigmoid(xv)));
            }
            Op::Exp(x) => self.acc_with(grads, *x, || g.zip_map(out, |gv, y| gv * y)),
            Op::Tanh(x) => self.acc_with(grads, *x, || g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::Relu(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    g.zip_map(self.value(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 })
                });
            }
            Op::Elu(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    g.zip_map(self.value(x), |gv, xv| if xv > 0.0 { gv } else { gv * xv.exp() })
                });
            }
            Op::Abs(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    g.zip_map(self.value(x), |gv, xv| {
                        if xv > 0.0 {
                            gv
                        } else if xv < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })
                });
            }
            Op::Square(x) => {
                let x = *x;
                self.acc_with(grads, x, || g.zip_map(self.value(x), |gv, xv| 2.0 * gv * xv));
            }
            Op::Expm1Ratio(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    g.zip_map(self.value(x), |gv, xv| gv * expm1_ratio_deriv(xv))
                });
            }
            Op::SoftmaxRows(x) => self.acc_with(grads, *x, || {
                let mut gx = Tensor::zeros(out.rows(), out.cols());
                let cols = out.cols().max(1);
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let gy = g.row_slice(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..out.cols() {
                        gx.data_mut()[r * cols + c] = y[c] * (gy[c] - dot);
                    }
                }
                gx
            }),
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    self.acc_with(grads, p, || {
                        let mut gp = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            gp.data_mut()[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g.row_slice(r)[off..off + pc]);
                        }
                        gp
                    });
                    off += pc;
                }
            }
            Op::Slice(x, start) => {
                let (x, start) = (*x, *start);
                self.acc_with(grads, x, || {
                    let (rows, cols) = self.shape(x);
                    let w = g.cols();
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        gx.data_mut()[r * cols + start..r * cols + start + w]
                            .copy_from_slice(g.row_slice(r));
                    }
                    gx
                });
            }
            Op::Reshape(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    let (r, c) = self.shape(x);
                    g.clone().reshaped(r, c)
                });
            }
            Op::Sum(x) => {
                let x = *x;
                let gv = g.item();
                self.acc_with(grads, x, || {
                    let (r, c) = self.shape(x);
                    Tensor::filled(r, c, gv)
                });
            }
            Op::Mean(x) => {
                let x = *x;
                let gv = g.item();
                self.acc_with(grads, x, || {
                    let (r, c) = self.shape(x);
                    Tensor::filled(r, c, gv / (r * c).max(1) as f64)
                });
            }
            Op::SumSquares(x) => {
                let x = *x;
                let gv = g.item();
                self.acc_with(grads, x, || self.value(x).map(|v| 2.0 * gv * v));
            }
            Op::RowSum(x) => {
                let x = *x;
                self.acc_with(grads, x, || {
                    let (r, c) = self.shape(x);
                    let mut gx = Tensor::zeros(r, c);
                    for i in 0..r {
                        let gi = g.get(i, 0);
                        gx.data_mut()[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = gi);
                    }
                    gx
                });
            }
            Op::GroupScores { q, k, group } => {
                let (q, k, group) = (*q, *k, *group);
                let (qv, kv) = (self.value(q), self.value(k));
                let (rows, d) = qv.shape();
                self.acc_with(grads, q, || {
                    let mut gq = Tensor::zeros(rows, d);
                    for gi in 0..rows / group {
                        for i in 0..group {
                            let r = gi * group + i;
                            for j in 0..group {
                                let c = g.get(r, j);
                                let kj = kv.row_slice(gi * group + j);
                                for (o, &kv) in gq.data_mut()[r * d..(r + 1) * d].iter_mut().zip(kj) {
                                    *o += c * kv;
                                }
                            }
                        }
                    }
                    gq
                });
                self.acc_with(grads, k, || {
                    let mut gk = Tensor::zeros(rows, d);
                    for gi in 0..rows / group {
                        for j in 0..group {
                            let r = gi * group + j;
                            for i in 0..group {
                                let c = g.get(gi * group + i, j);
                                let qi = qv.row_slice(gi * group + i);
                                for (o, &qv) in gk.data_mut()[r * d..(r + 1) * d].iter_mut().zip(qi) {
                                    *o += c * qv;
                                }
                            }
                        }
                    }
                    gk
                });
            }
            Op::GroupMix { w, h, group } => {
                let (w, h, group) = (*w, *h, *group);
                let (wv, hv) = (self.value(w), self.value(h));
                let (rows, d) = hv.shape();
                self.acc_with(grads, w, || {
                    let mut gw = Tensor::zeros(rows, group);
                    for gi in 0..rows / group {
                        for i in 0..group {
                            let r = gi * group + i;
                            let gr = g.row_slice(r);
                            for j in 0..group {
                                let hj = hv.row_slice(gi * group + j);
                                let dot: f64 = gr.iter().zip(hj).map(|(a, b)| a * b).sum();
                                gw.set(r, j, dot);
                            }
                        }
                    }
                    gw
                });
                self.acc_with(grads, h, || {
                    let mut gh = Tensor::zeros(rows, d);
                    for gi in 0..rows / group {
                        for j in 0..group {
                            let r = gi * group + j;
                            for i in 0..group {
                                let wij = wv.get(gi * group + i, j);
                                let gr = g.row_slice(gi * group + i);
                                for (o, &gv) in gh.data_mut()[r * d..(r + 1) * d].iter_mut().zip(gr) {
                                    *o += wij * gv;
                                }
                            }
                        }
                    }
                    gh
                });
            }
            Op::RowVecMat { x, w } => {
                let (x, w) = (*x, *w);
                let (xv, wv) = (self.value(x), self.value(w));
                let (bsz, n) = xv.shape();
                let m = wv.cols() / n;
                self.acc_with(grads, x, || {
                    let mut gx = Tensor::zeros(bsz, n);
                    for b in 0..bsz {
                        let gr = g.row_slice(b);
                        let wr = wv.row_slice(b);
                        for i in 0..n {
                            let dot: f64 = gr.iter().zip(&wr[i * m..(i + 1) * m]).map(|(a, c)| a * c).sum();
                            gx.set(b, i, dot);
                        }
                    }
                    gx
                });
                self.acc_with(grads, w, || {
                    let mut gw = Tensor::zeros(bsz, n * m);
                    for b in 0..bsz {
                        let gr = g.row_slice(b);
                        let xr = xv.row_slice(b);
                        let row = &mut gw.data_mut()[b * n * m..(b + 1) * n * m];
                        for i in 0..n {
                            for c in 0..m {
                                row[i * m + c] = xr[i] * gr[c];
                            }
                        }
                    }
                    gw
                });
            }
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, &v) in out.data_mut().iter_mut().zip(g.row_slice(r)) {
            *o += v;
        }
    }
    out
}
