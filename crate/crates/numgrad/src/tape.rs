//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value. Nodes whose
//! inputs carry no gradient are stored as plain constants, so the backward
//! sweep only visits the differentiable part of the graph. Because nodes
//! are appended in evaluation order, a single reverse pass over the tape is
//! a valid topological order and visits each node exactly once.

use std::sync::Arc;

use rand::Rng;

use crate::error::{NumError, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Floor applied to log and division inputs.
pub const GUARD: f64 = 1e-10;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    DivCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>, Axis),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    SpMM(Arc<CsrMatrix<T>>, Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    LogSigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    ClampMin(Var, T),
    Softmax(Var, Axis),
    LogSoftmax(Var, Axis),
    SegmentSoftmax(Var, Arc<[usize]>),
    Dropout(Var, Vec<T>),
    L2NormalizeRows(Var, T),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(usize, ParamId, Var)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> NumError {
    NumError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free differentiable input not backed by a parameter store.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Places a parameter on the tape; its gradient is collected by
    /// [`Gradients::param`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.push((store.uid(), id, v));
        v
    }

    /// Places a parameter as a constant (no gradient).
    pub fn frozen(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.constant(store.get(id).clone())
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        self.value(a).zip_map(self.value(b), f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.binary(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), self.rg(&[a, b])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.binary(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), self.rg(&[a, b])))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.binary(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), self.rg(&[a, b])))
    }

    /// `[m, n] + [1, n]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2("add_row")?;
        if self.shape(row) != [1, n] {
            return Err(mismatch("add_row", self.shape(a), self.shape(row)));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..m {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row), self.rg(&[a, row])))
    }

    /// `[m, n] * [m, 1]`, scaling each row of `a`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, _) = self.value(a).dims2("mul_col")?;
        if self.shape(col) != [m, 1] {
            return Err(mismatch("mul_col", self.shape(a), self.shape(col)));
        }
        let mut out = self.value(a).clone();
        for i in 0..m {
            let s = self.value(col).data()[i];
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.push(out, Op::MulCol(a, col), self.rg(&[a, col])))
    }

    /// `[m, n] / [m, 1]`; the divisor is floored at [`GUARD`].
    pub fn div_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, _) = self.value(a).dims2("div_col")?;
        if self.shape(col) != [m, 1] {
            return Err(mismatch("div_col", self.shape(a), self.shape(col)));
        }
        let floor = T::lit(GUARD);
        let mut out = self.value(a).clone();
        for i in 0..m {
            let d = self.value(col).data()[i].max(floor);
            out.row_mut(i).iter_mut().for_each(|x| *x /= d);
        }
        Ok(self.push(out, Op::DivCol(a, col), self.rg(&[a, col])))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s), self.rg(&[a]))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), self.rg(&[a]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b), self.rg(&[a, b])))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        Ok(self.push(v, Op::Transpose(a), self.rg(&[a])))
    }

    /// Concatenates rank-2 tensors along `axis` (`Rows` stacks vertically).
    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts.first().ok_or(NumError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let (m0, n0) = self.value(first).dims2("concat")?;
        let mut total = 0;
        for &p in parts {
            let (m, n) = self.value(p).dims2("concat")?;
            match axis {
                Axis::Rows if n != n0 => return Err(mismatch("concat", self.shape(first), self.shape(p))),
                Axis::Cols if m != m0 => return Err(mismatch("concat", self.shape(first), self.shape(p))),
                Axis::Rows => total += m,
                Axis::Cols => total += n,
            }
        }
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::with_capacity(total * n0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::new(vec![total, n0], data)?
            }
            Axis::Cols => {
                let mut data = Vec::with_capacity(m0 * total);
                for r in 0..m0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(r));
                    }
                }
                Tensor::new(vec![m0, total], data)?
            }
        };
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let v = self.value(a).gather_rows(&index)?;
        Ok(self.push(v, Op::GatherRows(a, index), self.rg(&[a])))
    }

    /// Adds row `k` of `a` into output row `index[k]` of an `[out_rows, n]` result.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<[usize]>, out_rows: usize) -> Result<Var> {
        let v = self.value(a).scatter_add_rows(&index, out_rows)?;
        Ok(self.push(v, Op::ScatterAddRows(a, index), self.rg(&[a])))
    }

    /// Constant sparse matrix times a dense tape value.
    pub fn spmm(&mut self, m: Arc<CsrMatrix<T>>, x: Var) -> Result<Var> {
        let v = m.matmul(self.value(x))?;
        Ok(self.push(v, Op::SpMM(m, x), self.rg(&[x])))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        self.push(v, Op::LeakyRelu(a, slope), self.rg(&[a]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), self.rg(&[a]))
    }

    /// `log σ(x)`, evaluated without overflow for large `|x|`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(log_sigmoid);
        self.push(v, Op::LogSigmoid(a), self.rg(&[a]))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::exp);
        self.push(v, Op::Exp(a), self.rg(&[a]))
    }

    /// Natural log with the input floored at [`GUARD`].
    pub fn log(&mut self, a: Var) -> Var {
        let floor = T::lit(GUARD);
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(v, Op::Log(a), self.rg(&[a]))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), self.rg(&[a]))
    }

    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        self.push(v, Op::ClampMin(a, floor), self.rg(&[a]))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let v = along(self.value(a), axis, |lane| softmax_lane(lane))?;
        Ok(self.push(v, Op::Softmax(a, axis), self.rg(&[a])))
    }

    pub fn log_softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let v = along(self.value(a), axis, |lane| log_softmax_lane(lane))?;
        Ok(self.push(v, Op::LogSoftmax(a, axis), self.rg(&[a])))
    }

    /// Softmax of an `[n, 1]` column within contiguous segments
    /// `offsets[s]..offsets[s + 1]`.
    pub fn segment_softmax(&mut self, a: Var, offsets: Arc<[usize]>) -> Result<Var> {
        let (n, c) = self.value(a).dims2("segment_softmax")?;
        if c != 1 || offsets.last().copied() != Some(n) || offsets.first().copied() != Some(0) {
            return Err(NumError::InvalidArgument {
                op: "segment_softmax",
                reason: format!(
                    "expected [n, 1] input covered by offsets, got shape {:?} and {} offsets",
                    self.shape(a),
                    offsets.len()
                ),
            });
        }
        let mut out = self.value(a).clone();
        for w in offsets.windows(2) {
            if w[1] < w[0] {
                return Err(NumError::InvalidArgument {
                    op: "segment_softmax",
                    reason: "offsets must be non-decreasing".into(),
                });
            }
            let lane = softmax_lane(&out.data()[w[0]..w[1]]);
            out.data_mut()[w[0]..w[1]].copy_from_slice(&lane);
        }
        Ok(self.push(out, Op::SegmentSoftmax(a, offsets), self.rg(&[a])))
    }

    /// Inverted dropout: survivors are divided by `1 - rate`. A zero rate is
    /// the identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumError::InvalidArgument {
                op: "dropout",
                reason: format!("rate {rate} outside [0, 1)"),
            });
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let mut v = self.value(a).clone();
        for (x, &m) in v.data_mut().iter_mut().zip(&mask) {
            *x *= m;
        }
        Ok(self.push(v, Op::Dropout(a, mask), self.rg(&[a])))
    }

    /// Divides every row by its L2 norm, floored at `eps`.
    pub fn l2_normalize_rows(&mut self, a: Var, eps: T) -> Result<Var> {
        let (m, _) = self.value(a).dims2("l2_normalize_rows")?;
        let mut out = self.value(a).clone();
        for i in 0..m {
            let row = out.row_mut(i);
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt().max(eps);
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(self.push(out, Op::L2NormalizeRows(a, eps), self.rg(&[a])))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), self.rg(&[a]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / T::lit(t.numel().max(1) as f64));
        self.push(v, Op::Mean(a), self.rg(&[a]))
    }

    /// `[m, n] -> [m, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (m, _) = self.value(a).dims2("sum_rows")?;
        let t = self.value(a);
        let v = Tensor::column((0..m).map(|i| t.row(i).iter().copied().sum()).collect());
        Ok(self.push(v, Op::SumRows(a), self.rg(&[a])))
    }

    /// `[m, n] -> [1, n]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2("sum_cols")?;
        let t = self.value(a);
        let mut acc = vec![T::zero(); n];
        for i in 0..m {
            for (s, &x) in acc.iter_mut().zip(t.row(i)) {
                *s += x;
            }
        }
        Ok(self.push(Tensor::row_vector(acc), Op::SumCols(a), self.rg(&[a])))
    }

    /// `Σ (a − b)²` as a scalar.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.sum(sq))
    }

    /// `Σ x²` as a scalar.
    pub fn sum_sq(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        self.sum(sq)
    }

    /// Propagates gradients from a scalar `loss` back to every
    /// differentiable node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0].value;
        if root.numel() != 1 {
            return Err(NumError::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(root.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.local_grads(node, &g)?;
            for (v, t) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        let grads = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(val(*b), |x, y| x * y)),
                (*b, g.zip_map(val(*a), |x, y| x * y)),
            ],
            Op::AddRow(a, row) => {
                let (m, n) = g.dims2("add_row")?;
                let mut acc = vec![T::zero(); n];
                for i in 0..m {
                    for (s, &x) in acc.iter_mut().zip(g.row(i)) {
                        *s += x;
                    }
                }
                vec![(*a, g.clone()), (*row, Tensor::row_vector(acc))]
            }
            Op::MulCol(a, col) => {
                let (m, _) = g.dims2("mul_col")?;
                let c = val(*col);
                let av = val(*a);
                let mut ga = g.clone();
                let mut gc = Vec::with_capacity(m);
                for i in 0..m {
                    let s = c.data()[i];
                    ga.row_mut(i).iter_mut().for_each(|x| *x *= s);
                    gc.push(g.row(i).iter().zip(av.row(i)).map(|(&x, &y)| x * y).sum());
                }
                vec![(*a, ga), (*col, Tensor::column(gc))]
            }
            Op::DivCol(a, col) => {
                let (m, _) = g.dims2("div_col")?;
                let floor = T::lit(GUARD);
                let c = val(*col);
                let av = val(*a);
                let mut ga = g.clone();
                let mut gc = Vec::with_capacity(m);
                for i in 0..m {
                    let raw = c.data()[i];
                    let d = raw.max(floor);
                    ga.row_mut(i).iter_mut().for_each(|x| *x /= d);
                    if raw > floor {
                        let dot: T = g.row(i).iter().zip(av.row(i)).map(|(&x, &y)| x * y).sum();
                        gc.push(-dot / (d * d));
                    } else {
                        gc.push(T::zero());
                    }
                }
                vec![(*a, ga), (*col, Tensor::column(gc))]
            }
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::MatMul(a, b) => vec![(*a, g.matmul_t(val(*b))?), (*b, val(*a).t_matmul(g)?)],
            Op::Transpose(a) => vec![(*a, g.transpose()?)],
            Op::Concat(parts, axis) => {
                let mut res = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let (m, n) = val(p).dims2("concat")?;
                    let piece = match axis {
                        Axis::Rows => {
                            let cols = g.cols();
                            Tensor::new(vec![m, n], g.data()[offset * cols..(offset + m) * cols].to_vec())?
                        }
                        Axis::Cols => Tensor::from_fn(m, n, |r, c| g.get(r, offset + c)),
                    };
                    offset += match axis {
                        Axis::Rows => m,
                        Axis::Cols => n,
                    };
                    res.push((p, piece));
                }
                res
            }
            Op::GatherRows(a, index) => {
                vec![(*a, g.scatter_add_rows(index, val(*a).rows())?)]
            }
            Op::ScatterAddRows(a, index) => vec![(*a, g.gather_rows(index)?)],
            Op::SpMM(m, x) => vec![(*x, m.t_matmul(g)?)],
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                vec![(*a, g.zip_map(val(*a), |d, x| if x > T::zero() { d } else { d * s }))]
            }
            Op::Sigmoid(a) => vec![(*a, g.zip_map(out, |d, y| d * y * (T::one() - y)))],
            Op::LogSigmoid(a) => vec![(*a, g.zip_map(val(*a), |d, x| d * sigmoid(-x)))],
            Op::Exp(a) => vec![(*a, g.zip_map(out, |d, y| d * y))],
            Op::Log(a) => {
                let floor = T::lit(GUARD);
                vec![(*a, g.zip_map(val(*a), |d, x| if x > floor { d / x } else { T::zero() }))]
            }
            Op::Square(a) => vec![(*a, g.zip_map(val(*a), |d, x| d * (x + x)))],
            Op::ClampMin(a, floor) => {
                let f = *floor;
                vec![(*a, g.zip_map(val(*a), |d, x| if x > f { d } else { T::zero() }))]
            }
            Op::Softmax(a, axis) => {
                let ga = along2(out, g, *axis, |y, d| {
                    let dot: T = y.iter().zip(d).map(|(&p, &q)| p * q).sum();
                    y.iter().zip(d).map(|(&p, &q)| p * (q - dot)).collect()
                })?;
                vec![(*a, ga)]
            }
            Op::LogSoftmax(a, axis) => {
                let ga = along2(out, g, *axis, |y, d| {
                    let total: T = d.iter().copied().sum();
                    y.iter().zip(d).map(|(&ly, &q)| q - ly.exp() * total).collect()
                })?;
                vec![(*a, ga)]
            }
            Op::SegmentSoftmax(a, offsets) => {
                let mut ga = g.clone();
                for w in offsets.windows(2) {
                    let y = &out.data()[w[0]..w[1]];
                    let d = &g.data()[w[0]..w[1]];
                    let dot: T = y.iter().zip(d).map(|(&p, &q)| p * q).sum();
                    for (k, slot) in ga.data_mut()[w[0]..w[1]].iter_mut().enumerate() {
                        *slot = y[k] * (d[k] - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (x, &m) in ga.data_mut().iter_mut().zip(mask) {
                    *x *= m;
                }
                vec![(*a, ga)]
            }
            Op::L2NormalizeRows(a, eps) => {
                let (m, _) = g.dims2("l2_normalize_rows")?;
                let av = val(*a);
                let mut ga = g.clone();
                for i in 0..m {
                    let norm = av.row(i).iter().map(|&x| x * x).sum::<T>().sqrt();
                    let y = out.row(i);
                    let d = g.row(i);
                    let row = ga.row_mut(i);
                    if norm > *eps {
                        let dot: T = y.iter().zip(d).map(|(&p, &q)| p * q).sum();
                        for k in 0..row.len() {
                            row[k] = (d[k] - y[k] * dot) / norm;
                        }
                    } else {
                        row.iter_mut().for_each(|x| *x /= *eps);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()))],
            Op::Mean(a) => {
                let n = T::lit(val(*a).numel().max(1) as f64);
                vec![(*a, Tensor::full(val(*a).shape(), g.item() / n))]
            }
            Op::SumRows(a) => {
                let (m, n) = val(*a).dims2("sum_rows")?;
                vec![(*a, Tensor::from_fn(m, n, |r, _| g.data()[r]))]
            }
            Op::SumCols(a) => {
                let (m, n) = val(*a).dims2("sum_cols")?;
                vec![(*a, Tensor::from_fn(m, n, |_, c| g.data()[c]))]
            }
        };
        Ok(grads)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a tape node; `None` when the node is not on a path to the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Total gradient of a parameter, summed over every placement on the
    /// tape. Unreachable parameters get zeros.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Tensor<T> {
        let mut acc = Tensor::zeros(store.get(id).shape());
        for &(uid, pid, v) in &self.params {
            if uid == store.uid() && pid == id {
                if let Some(g) = self.wrt(v) {
                    acc.add_assign(g);
                }
            }
        }
        acc
    }

    /// Gradients for every parameter of `store`, in store order.
    pub fn for_store(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        store.ids().map(|id| self.param(store, id)).collect()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn log_sigmoid<T: Real>(x: T) -> T {
    // log σ(x) = −softplus(−x)
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn softmax_lane<T: Real>(lane: &[T]) -> Vec<T> {
    let max = lane.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = lane.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_lane<T: Real>(lane: &[T]) -> Vec<T> {
    let max = lane.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + lane.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    lane.iter().map(|&x| x - lse).collect()
}

fn along<T: Real>(t: &Tensor<T>, axis: Axis, f: impl Fn(&[T]) -> Vec<T>) -> Result<Tensor<T>> {
    t.dims2("softmax")?;
    match axis {
        Axis::Cols => {
            let mut out = t.clone();
            for r in 0..t.rows() {
                let lane = f(t.row(r));
                out.row_mut(r).copy_from_slice(&lane);
            }
            Ok(out)
        }
        Axis::Rows => along(&t.transpose()?, Axis::Cols, f)?.transpose(),
    }
}

fn along2<T: Real>(
    y: &Tensor<T>,
    d: &Tensor<T>,
    axis: Axis,
    f: impl Fn(&[T], &[T]) -> Vec<T>,
) -> Result<Tensor<T>> {
    match axis {
        Axis::Cols => {
            let mut out = d.clone();
            for r in 0..y.rows() {
                let lane = f(y.row(r), d.row(r));
                out.row_mut(r).copy_from_slice(&lane);
            }
            Ok(out)
        }
        Axis::Rows => along2(&y.transpose()?, &d.transpose()?, Axis::Cols, f)?.transpose(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_softmax() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::row_vector(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x, Axis::Cols).unwrap();
        for &p in tape.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_and_leaky_relu_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::row_vector(vec![0.0, -1.0]));
        let s = tape.sigmoid(x);
        let l = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(s).data()[0], 0.5);
        assert!((tape.value(l).data()[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::scalar(3.0));
        let y = tape.square(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sum_of_wx_gives_broadcast_x() {
        let mut tape = Tape::<f64>::new();
        let w = tape.variable(Tensor::from_fn(2, 3, |r, c| (r + c) as f64));
        let x = tape.constant(Tensor::column(vec![1.0, -2.0, 0.5]));
        let wx = tape.matmul(w, x).unwrap();
        let loss = tape.sum(wx);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w).unwrap().data(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
        assert!(g.wrt(x).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::zeros(&[2, 1]));
        assert!(matches!(tape.backward(x), Err(NumError::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let b = store.add("b", Tensor::from_fn(1, 2, |_, _| 1.0));
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let loss = tape.square(av);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.param(&store, a).item(), 4.0);
        assert_eq!(g.param(&store, b).data(), &[0.0, 0.0]);
    }

    #[test]
    fn reused_param_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let mut tape = Tape::new();
        let a1 = tape.param(&store, a);
        let a2 = tape.param(&store, a);
        let p = tape.mul(a1, a2).unwrap();
        let g = tape.backward(p).unwrap();
        assert_eq!(g.param(&store, a).item(), 4.0);
    }

    #[test]
    fn constants_record_no_op() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::scalar(1.0));
        let y = tape.exp(x);
        assert!(!tape.requires_grad(y));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        let err = tape.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(-800.0f64) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0f64).abs() < 1e-300);
        assert!((log_sigmoid(0.0f64) + std::f64::consts::LN_2).abs() < 1e-15);
    }
}
