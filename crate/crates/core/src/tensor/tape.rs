//! Reverse-mode differentiation over a flat record of matrix operations.
//!
//! A [`Tape`] borrows the [`ParamStore`] it reads parameters from. Each op
//! appends a node holding its forward value; [`Tape::backward`] walks the
//! record in reverse and returns per-parameter [`Gradients`].

use rand::Rng;

use super::{Gradients, ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Which dimension an op works along: `Rows` stacks/normalizes down the
/// columns (axis 0), `Cols` across each row (axis 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

enum Op<'a> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Concat(Var, Var, Axis),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    OneMinus(Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var, Axis),
    Gather(Var, Vec<usize>),
    GatherParam(ParamId, Vec<usize>),
    RepeatRows(Var),
    SliceCols(Var, usize),
    Row(Var, usize),
    Aggregate(Var, &'a [Vec<usize>], &'a [f64]),
    Dropout(Var, Vec<f64>),
    Mean(Var),
    Sum(Var),
    NegLogPick(Var, Vec<usize>),
    Map(Var, fn(f64) -> f64),
}

struct Node<'a> {
    value: Option<Tensor>,
    op: Op<'a>,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node<'a>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op<'a>) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param_by_name(&mut self, name: &str) -> Result<Var, TensorError> {
        let id = self
            .store
            .id(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        Ok(self.param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(mismatch("matmul", x, y));
        }
        let out = x.matmul(y);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: Axis) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        let out = match axis {
            Axis::Cols => {
                if x.rows() != y.rows() {
                    return Err(mismatch("concat(cols)", x, y));
                }
                let mut data = Vec::with_capacity(x.len() + y.len());
                for r in 0..x.rows() {
                    data.extend_from_slice(x.row(r));
                    data.extend_from_slice(y.row(r));
                }
                Tensor::new(x.rows(), x.cols() + y.cols(), data)
            }
            Axis::Rows => {
                if x.cols() != y.cols() {
                    return Err(mismatch("concat(rows)", x, y));
                }
                let mut data = x.data().to_vec();
                data.extend_from_slice(y.data());
                Tensor::new(x.rows() + y.rows(), x.cols(), data)
            }
        };
        Ok(self.push(out, Op::Concat(a, b, axis)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch(op, x, y));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds the `1 x c` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(mismatch("add_row", xv, bv));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| 1.0 - v);
        self.push(out, Op::OneMinus(x))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| v * k);
        self.push(out, Op::Scale(x, k))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Var {
        let v = self.value(x);
        let out = match axis {
            Axis::Cols => {
                let mut out = v.clone();
                for r in 0..out.rows() {
                    let row = out.row_mut(r);
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for e in row.iter_mut() {
                        *e = (*e - max).exp();
                        sum += *e;
                    }
                    for e in row.iter_mut() {
                        *e /= sum;
                    }
                }
                out
            }
            Axis::Rows => {
                let mut out = v.clone();
                for c in 0..out.cols() {
                    let max = (0..out.rows()).map(|r| out.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for r in 0..out.rows() {
                        let e = (out.get(r, c) - max).exp();
                        out.set(r, c, e);
                        sum += e;
                    }
                    for r in 0..out.rows() {
                        out.set(r, c, out.get(r, c) / sum);
                    }
                }
                out
            }
        };
        self.push(out, Op::Softmax(x, axis))
    }

    fn gather_rows(table: &Tensor, ids: &[usize]) -> Result<Tensor, TensorError> {
        let mut data = Vec::with_capacity(ids.len() * table.cols());
        for &i in ids {
            if i >= table.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding_lookup",
                    index: i,
                    bound: table.rows(),
                });
            }
            data.extend_from_slice(table.row(i));
        }
        Ok(Tensor::new(ids.len(), table.cols(), data))
    }

    /// Row `k` of the result is row `ids[k]` of `table`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let out = Self::gather_rows(self.value(table), ids)?;
        Ok(self.push(out, Op::Gather(table, ids.to_vec())))
    }

    /// [`Tape::embedding_lookup`] straight from a parameter, without putting
    /// the whole table on the tape.
    pub fn embedding_lookup_param(&mut self, table: ParamId, ids: &[usize]) -> Result<Var, TensorError> {
        let out = Self::gather_rows(self.store.value(table), ids)?;
        Ok(self.push(out, Op::GatherParam(table, ids.to_vec())))
    }

    /// Stacks `n` copies of the `1 x c` row `x`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var, TensorError> {
        let v = self.value(x);
        if v.rows() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "repeat_rows",
                left: v.shape(),
                right: [1, v.cols()],
            });
        }
        let mut data = Vec::with_capacity(n * v.cols());
        for _ in 0..n {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(n, v.cols(), data);
        Ok(self.push(out, Op::RepeatRows(x)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let v = self.value(x);
        if start + len > v.cols() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: v.cols(),
            });
        }
        let mut data = Vec::with_capacity(v.rows() * len);
        for r in 0..v.rows() {
            data.extend_from_slice(&v.row(r)[start..start + len]);
        }
        let out = Tensor::new(v.rows(), len, data);
        Ok(self.push(out, Op::SliceCols(x, start)))
    }

    pub fn row(&mut self, x: Var, r: usize) -> Result<Var, TensorError> {
        let v = self.value(x);
        if r >= v.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "row",
                index: r,
                bound: v.rows(),
            });
        }
        let out = Tensor::row_vector(v.row(r).to_vec());
        Ok(self.push(out, Op::Row(x, r)))
    }

    /// Row `v` of the result is `(1 / norm[v]) * sum_{j in preds[v]} x[j]`.
    pub fn aggregate(&mut self, x: Var, preds: &'a [Vec<usize>], norm: &'a [f64]) -> Result<Var, TensorError> {
        let v = self.value(x);
        if preds.len() != v.rows() || norm.len() != v.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "aggregate",
                left: v.shape(),
                right: [preds.len(), norm.len()],
            });
        }
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for (dst, ps) in preds.iter().enumerate() {
            let inv = 1.0 / norm[dst];
            let row = out.row_mut(dst);
            for &src in ps {
                if src >= v.rows() {
                    return Err(TensorError::IndexOutOfRange {
                        op: "aggregate",
                        index: src,
                        bound: v.rows(),
                    });
                }
                for (o, s) in row.iter_mut().zip(v.row(src)) {
                    *o += inv * s;
                }
            }
        }
        Ok(self.push(out, Op::Aggregate(x, preds, norm)))
    }

    /// Inverted dropout: identity unless `training`, otherwise zeroes each
    /// element with probability `p` and scales survivors by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let v = self.value(x);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = Tensor::new(
            v.rows(),
            v.cols(),
            v.data().iter().zip(&mask).map(|(a, m)| a * m).collect(),
        );
        Ok(self.push(out, Op::Dropout(x, mask)))
    }

    /// Mean of all elements, as `1 x 1`.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::scalar(v.sum() / v.len().max(1) as f64);
        self.push(out, Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// `-ln(probs[r, index[r]])` per row, as an `r x 1` column.
    pub fn neg_log_pick(&mut self, probs: Var, index: &[usize]) -> Result<Var, TensorError> {
        let p = self.value(probs);
        if p.rows() != index.len() {
            return Err(TensorError::ShapeMismatch {
                op: "neg_log_pick",
                left: p.shape(),
                right: [index.len(), 1],
            });
        }
        let mut data = Vec::with_capacity(index.len());
        for (r, &c) in index.iter().enumerate() {
            if c >= p.cols() {
                return Err(TensorError::IndexOutOfRange {
                    op: "neg_log_pick",
                    index: c,
                    bound: p.cols(),
                });
            }
            data.push(-p.get(r, c).max(f64::MIN_POSITIVE).ln());
        }
        let out = Tensor::new(index.len(), 1, data);
        Ok(self.push(out, Op::NegLogPick(probs, index.to_vec())))
    }

    /// Elementwise `f` with caller-supplied derivative `df`, evaluated at the
    /// input.
    pub fn map(&mut self, x: Var, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Var {
        let out = self.value(x).map(f);
        self.push(out, Op::Map(x, df))
    }

    /// Back-propagates from the scalar `loss` and consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut out = Gradients::with_len(self.store.len());
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if self.store.param(*id).trainable {
                        out.slot(*id, g.rows(), g.cols()).add_assign(&g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_nt(bv));
                    acc(&mut grads, *b, av.matmul_tn(&g));
                }
                Op::Concat(a, b, axis) => {
                    let (ac, ar) = (self.value(*a).cols(), self.value(*a).rows());
                    match axis {
                        Axis::Cols => {
                            let bc = g.cols() - ac;
                            let mut ga = Vec::with_capacity(g.rows() * ac);
                            let mut gb = Vec::with_capacity(g.rows() * bc);
                            for r in 0..g.rows() {
                                let row = g.row(r);
                                ga.extend_from_slice(&row[..ac]);
                                gb.extend_from_slice(&row[ac..]);
                            }
                            acc(&mut grads, *a, Tensor::new(g.rows(), ac, ga));
                            acc(&mut grads, *b, Tensor::new(g.rows(), bc, gb));
                        }
                        Axis::Rows => {
                            let split = ar * g.cols();
                            let ga = g.data()[..split].to_vec();
                            let gb = g.data()[split..].to_vec();
                            acc(&mut grads, *a, Tensor::new(ar, g.cols(), ga));
                            acc(&mut grads, *b, Tensor::new(g.rows() - ar, g.cols(), gb));
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(x, bias) => {
                    acc(&mut grads, *bias, g.col_sums());
                    acc(&mut grads, *x, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::OneMinus(x) => acc(&mut grads, *x, g.map(|v| -v)),
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.zip_map(bv, |d, y| d * y));
                    acc(&mut grads, *b, g.zip_map(av, |d, x| d * x));
                }
                Op::Scale(x, k) => acc(&mut grads, *x, g.map(|v| v * k)),
                Op::Sigmoid(x) => {
                    let y = y.expect("sigmoid output");
                    acc(&mut grads, *x, g.zip_map(y, |d, s| d * s * (1.0 - s)));
                }
                Op::Tanh(x) => {
                    let y = y.expect("tanh output");
                    acc(&mut grads, *x, g.zip_map(y, |d, t| d * (1.0 - t * t)));
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip_map(xv, |d, v| if v > 0.0 { d } else { 0.0 }));
                }
                Op::Softmax(x, axis) => {
                    let y = y.expect("softmax output");
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    match axis {
                        Axis::Cols => {
                            for r in 0..y.rows() {
                                let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(d, s)| d * s).sum();
                                for c in 0..y.cols() {
                                    gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                                }
                            }
                        }
                        Axis::Rows => {
                            for c in 0..y.cols() {
                                let dot: f64 = (0..y.rows()).map(|r| g.get(r, c) * y.get(r, c)).sum();
                                for r in 0..y.rows() {
                                    gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(table, ids) => {
                    let tv = self.value(*table);
                    let mut gt = Tensor::zeros(tv.rows(), tv.cols());
                    for (k, &i) in ids.iter().enumerate() {
                        for (o, d) in gt.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += d;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::GatherParam(id, ids) => {
                    if self.store.param(*id).trainable {
                        let tv = self.store.value(*id);
                        let slot = out.slot(*id, tv.rows(), tv.cols());
                        for (k, &i) in ids.iter().enumerate() {
                            for (o, d) in slot.row_mut(i).iter_mut().zip(g.row(k)) {
                                *o += d;
                            }
                        }
                    }
                }
                Op::RepeatRows(x) => acc(&mut grads, *x, g.col_sums()),
                Op::SliceCols(x, start) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Row(x, r) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    gx.row_mut(*r).copy_from_slice(g.data());
                    acc(&mut grads, *x, gx);
                }
                Op::Aggregate(x, preds, norm) => {
                    let mut gx = Tensor::zeros(g.rows(), g.cols());
                    for (dst, ps) in preds.iter().enumerate() {
                        let inv = 1.0 / norm[dst];
                        let gd = g.row(dst);
                        for &src in ps {
                            for (o, d) in gx.row_mut(src).iter_mut().zip(gd) {
                                *o += inv * d;
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Dropout(x, mask) => {
                    let gx = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask).map(|(d, m)| d * m).collect(),
                    );
                    acc(&mut grads, *x, gx);
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let k = g.item() / xv.len().max(1) as f64;
                    acc(&mut grads, *x, Tensor::filled(xv.rows(), xv.cols(), k));
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
                }
                Op::NegLogPick(p, index) => {
                    let pv = self.value(*p);
                    let mut gp = Tensor::zeros(pv.rows(), pv.cols());
                    for (r, &c) in index.iter().enumerate() {
                        gp.set(r, c, -g.get(r, 0) / pv.get(r, c).max(f64::MIN_POSITIVE));
                    }
                    acc(&mut grads, *p, gp);
                }
                Op::Map(x, df) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip_map(xv, |d, v| d * df(v)));
                }
            }
        }
        Ok(out)
    }
}
