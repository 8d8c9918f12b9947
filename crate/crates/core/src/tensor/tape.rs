//! Reverse-mode differentiation over a linear record of operations.
//!
//! Every forward op appends one node to the [`Tape`]; node ids increase with
//! creation order, so reverse id order is a valid reverse topological order.
//! All tensors are rank-2 (see [`Tensor`]).

use std::cell::RefCell;
use std::rc::Rc;

use super::{Scalar, Tensor, TensorError, LOG_FLOOR};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reduce {
    All,
    Axis(usize),
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    ScalarMul(Var, T),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Transpose(Var),
    Concat(Vec<Var>, usize),
    Sum(Var, Reduce),
    Mean(Var, Reduce),
    Softmax(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation record. Interior mutability lets ops nest in expressions:
/// `tape.relu(tape.matmul(x, w)?)`.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Drops every node created at or after `len`.
    pub fn truncate(&self, len: usize) {
        self.nodes.borrow_mut().truncate(len);
    }

    pub fn zero_grads(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Adds an input tensor. `requires_grad` marks it as a differentiable parameter.
    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.item()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor<T>) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    /// Gradient accumulated by the last [`Tape::backward`]; `None` when the
    /// node was not reached.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.nodes.borrow()[v.0].grad.clone()
    }

    /// Gradient, or zeros of the node's shape when unreached.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.0];
        n.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(n.value.rows(), n.value.cols()))
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.0].requires_grad);
        nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn map_unary(&self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(f);
        self.push(value, op, &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)?
        };
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let value = {
            let nodes = self.nodes.borrow();
            let mut v = nodes[a.0].value.clone();
            v.add_assign(&nodes[b.0].value);
            v
        };
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Adds a `1×c` row (a bias) to every row of an `r×c` matrix.
    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != [1, sa[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let mut v = nodes[a.0].value.clone();
            let b = nodes[bias.0].value.data();
            for r in 0..sa[0] {
                for (x, &y) in v.row_mut(r).iter_mut().zip(b) {
                    *x = *x + y;
                }
            }
            v
        };
        Ok(self.push(value, Op::AddRow(a, bias), &[a, bias]))
    }

    pub fn elementwise_mul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("elementwise_mul", a, b)?;
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
            Tensor::from_vec(x.rows(), x.cols(), data)?
        };
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Multiplies row `r` of an `r×c` matrix by entry `r` of an `r×1` column.
    pub fn scale_rows(&self, a: Var, w: Var) -> Result<Var, TensorError> {
        let (sa, sw) = (self.shape(a), self.shape(w));
        if sw != [sa[0], 1] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: sa,
                rhs: sw,
            });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let mut v = nodes[a.0].value.clone();
            let wv = nodes[w.0].value.data();
            for (r, &s) in wv.iter().enumerate() {
                for x in v.row_mut(r) {
                    *x = *x * s;
                }
            }
            v
        };
        Ok(self.push(value, Op::ScaleRows(a, w), &[a, w]))
    }

    pub fn scalar_mul(&self, a: Var, c: T) -> Var {
        self.map_unary(a, Op::ScalarMul(a, c), |x| x * c)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.map_unary(a, Op::Neg(a), |x| -x)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.map_unary(a, Op::Exp(a), T::exp)
    }

    /// Natural log with inputs clamped to [`LOG_FLOOR`]; the gradient is zero
    /// where the clamp is active.
    pub fn log(&self, a: Var) -> Var {
        let floor = T::lit(LOG_FLOOR);
        self.map_unary(a, Op::Log(a), move |x| x.max(floor).ln())
    }

    pub fn relu(&self, a: Var) -> Var {
        self.map_unary(a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Var {
        self.map_unary(a, Op::LeakyRelu(a, slope), move |x| {
            if x > T::zero() {
                x
            } else {
                x * slope
            }
        })
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    /// Concatenates along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty { op: "concat" });
        }
        if axis > 1 {
            return Err(TensorError::BadAxis { op: "concat", axis });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let first = nodes[parts[0].0].value.shape();
            let keep = 1 - axis;
            let mut total = 0;
            for p in parts {
                let s = nodes[p.0].value.shape();
                if s[keep] != first[keep] {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        lhs: first,
                        rhs: s,
                    });
                }
                total += s[axis];
            }
            if axis == 0 {
                let mut data = Vec::with_capacity(total * first[1]);
                for p in parts {
                    data.extend_from_slice(nodes[p.0].value.data());
                }
                Tensor::from_vec(total, first[1], data)?
            } else {
                let rows = first[0];
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for p in parts {
                        data.extend_from_slice(nodes[p.0].value.row(r));
                    }
                }
                Tensor::from_vec(rows, total, data)?
            }
        };
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), parts))
    }

    fn reduce(&self, a: Var, how: Reduce, mean: bool) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let (r, c) = (x.rows(), x.cols());
            match how {
                Reduce::All => {
                    let s = x.sum();
                    let n = T::from_usize(x.len()).unwrap_or_else(T::one);
                    Tensor::scalar(if mean { s / n } else { s })
                }
                Reduce::Axis(0) => {
                    let mut out = Tensor::zeros(1, c);
                    for i in 0..r {
                        for (o, &v) in out.data_mut().iter_mut().zip(x.row(i)) {
                            *o = *o + v;
                        }
                    }
                    if mean {
                        let n = T::from_usize(r).unwrap_or_else(T::one);
                        out = out.map(|v| v / n);
                    }
                    out
                }
                Reduce::Axis(1) => {
                    let n = T::from_usize(c).unwrap_or_else(T::one);
                    let data = (0..r)
                        .map(|i| {
                            let s: T = x.row(i).iter().copied().sum();
                            if mean {
                                s / n
                            } else {
                                s
                            }
                        })
                        .collect();
                    Tensor::col_vector(data)
                }
                Reduce::Axis(axis) => {
                    return Err(TensorError::BadAxis {
                        op: if mean { "mean" } else { "sum" },
                        axis,
                    })
                }
            }
        };
        let op = if mean {
            Op::Mean(a, how)
        } else {
            Op::Sum(a, how)
        };
        Ok(self.push(value, op, &[a]))
    }

    /// Sum along `axis`: axis 0 gives `1×c`, axis 1 gives `r×1`.
    pub fn sum(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(a, Reduce::Axis(axis), false)
    }

    pub fn sum_all(&self, a: Var) -> Var {
        self.reduce(a, Reduce::All, false).expect("full reduction")
    }

    /// Mean along `axis`: axis 0 gives `1×c`, axis 1 gives `r×1`.
    pub fn mean(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.reduce(a, Reduce::Axis(axis), true)
    }

    pub fn mean_all(&self, a: Var) -> Var {
        self.reduce(a, Reduce::All, true).expect("full reduction")
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&self, a: Var, axis: usize) -> Result<Var, TensorError> {
        if axis > 1 {
            return Err(TensorError::BadAxis { op: "softmax", axis });
        }
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if axis == 1 {
                let mut out = x.clone();
                for r in 0..x.rows() {
                    softmax_in_place(out.row_mut(r));
                }
                out
            } else {
                let mut t = x.transpose();
                for r in 0..t.rows() {
                    softmax_in_place(t.row_mut(r));
                }
                t.transpose()
            }
        };
        Ok(self.push(value, Op::Softmax(a, axis), &[a]))
    }

    /// Picks rows of `table` by index; repeated indices are allowed.
    pub fn gather_rows(&self, table: Var, indices: Rc<[usize]>) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[table.0].value;
            let mut data = Vec::with_capacity(indices.len() * t.cols());
            for &i in indices.iter() {
                if i >= t.rows() {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_rows",
                        index: i,
                        bound: t.rows(),
                    });
                }
                data.extend_from_slice(t.row(i));
            }
            Tensor::from_vec(indices.len(), t.cols(), data)?
        };
        Ok(self.push(value, Op::GatherRows(table, indices), &[table]))
    }

    /// Softmax of an `n×1` column within contiguous groups. Group `g` spans
    /// rows `offsets[g]..offsets[g + 1]`; empty groups are allowed.
    pub fn segment_softmax(&self, a: Var, offsets: Rc<[usize]>) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            check_segments("segment_softmax", x, &offsets, true)?;
            let mut out = x.clone();
            for w in offsets.windows(2) {
                softmax_in_place(&mut out.data_mut()[w[0]..w[1]]);
            }
            out
        };
        Ok(self.push(value, Op::SegmentSoftmax(a, offsets), &[a]))
    }

    /// Sums rows within contiguous groups; output has one row per group
    /// (zeros for an empty group).
    pub fn segment_sum(&self, a: Var, offsets: Rc<[usize]>) -> Result<Var, TensorError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            check_segments("segment_sum", x, &offsets, false)?;
            let groups = offsets.len() - 1;
            let mut out = Tensor::zeros(groups, x.cols());
            for g in 0..groups {
                for r in offsets[g]..offsets[g + 1] {
                    let src = x.row(r);
                    for (o, &v) in out.row_mut(g).iter_mut().zip(src) {
                        *o = *o + v;
                    }
                }
            }
            out
        };
        Ok(self.push(value, Op::SegmentSum(a, offsets), &[a]))
    }

    /// Populates gradients of `root` (which must be `1×1`) with respect to
    /// every node that requires grad. Gradients accumulate over repeated uses
    /// of a node; call [`Tape::zero_grads`] between independent passes.
    pub fn backward(&self, root: Var) -> Result<(), TensorError> {
        let mut nodes = self.nodes.borrow_mut();
        let shape = nodes[root.0].value.shape();
        if shape != [1, 1] {
            return Err(TensorError::NonScalarRoot { shape });
        }
        if !nodes[root.0].requires_grad {
            return Ok(());
        }
        nodes[root.0].grad = Some(Tensor::scalar(T::one()));
        for id in (0..=root.0).rev() {
            if !nodes[id].requires_grad || matches!(nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(g) = nodes[id].grad.take() else {
                continue;
            };
            let contribs = local_backward(&nodes, id, &g);
            nodes[id].grad = Some(g);
            for (p, c) in contribs {
                let node = &mut nodes[p.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&c),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(())
    }
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    if xs.is_empty() {
        return;
    }
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        s = s + *x;
    }
    for x in xs.iter_mut() {
        *x = *x / s;
    }
}

fn check_segments<T: Scalar>(
    op: &'static str,
    x: &Tensor<T>,
    offsets: &[usize],
    column: bool,
) -> Result<(), TensorError> {
    if column && x.cols() != 1 {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: x.shape(),
            rhs: [x.rows(), 1],
        });
    }
    let valid = offsets.first() == Some(&0)
        && offsets.last() == Some(&x.rows())
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if !valid {
        return Err(TensorError::BadSegments { op, rows: x.rows() });
    }
    Ok(())
}

fn softmax_backward<T: Scalar>(y: &[T], g: &[T], out: &mut [T]) {
    let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
    for ((o, &yi), &gi) in out.iter_mut().zip(y).zip(g) {
        *o = yi * (gi - dot);
    }
}

fn local_backward<T: Scalar>(nodes: &[Node<T>], id: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let val = |v: Var| &nodes[v.0].value;
    let needs = |v: Var| nodes[v.0].requires_grad;
    let out = &nodes[id].value;
    let mut res = Vec::with_capacity(2);
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            if needs(a) {
                res.push((a, g.matmul(&val(b).transpose()).expect("matmul grad")));
            }
            if needs(b) {
                res.push((b, val(a).transpose().matmul(g).expect("matmul grad")));
            }
        }
        &Op::Add(a, b) => {
            res.push((a, g.clone()));
            res.push((b, g.clone()));
        }
        &Op::AddRow(a, b) => {
            res.push((a, g.clone()));
            if needs(b) {
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *o = *o + v;
                    }
                }
                res.push((b, db));
            }
        }
        &Op::Mul(a, b) => {
            let (x, y) = (val(a), val(b));
            if needs(a) {
                let d = g.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
                res.push((a, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
            }
            if needs(b) {
                let d = g.data().iter().zip(x.data()).map(|(&p, &q)| p * q).collect();
                res.push((b, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
            }
        }
        &Op::ScaleRows(a, w) => {
            let (x, s) = (val(a), val(w));
            if needs(a) {
                let mut d = g.clone();
                for (r, &sv) in s.data().iter().enumerate() {
                    for v in d.row_mut(r) {
                        *v = *v * sv;
                    }
                }
                res.push((a, d));
            }
            if needs(w) {
                let d = (0..g.rows())
                    .map(|r| g.row(r).iter().zip(x.row(r)).map(|(&p, &q)| p * q).sum())
                    .collect();
                res.push((w, Tensor::col_vector(d)));
            }
        }
        &Op::ScalarMul(a, c) => res.push((a, g.map(|v| v * c))),
        &Op::Neg(a) => res.push((a, g.map(|v| -v))),
        &Op::Exp(a) => {
            let d = g.data().iter().zip(out.data()).map(|(&p, &q)| p * q).collect();
            res.push((a, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
        }
        &Op::Log(a) => {
            let floor = T::lit(LOG_FLOOR);
            let d = g
                .data()
                .iter()
                .zip(val(a).data())
                .map(|(&p, &x)| if x > floor { p / x } else { T::zero() })
                .collect();
            res.push((a, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
        }
        &Op::Relu(a) => {
            let d = g
                .data()
                .iter()
                .zip(val(a).data())
                .map(|(&p, &x)| if x > T::zero() { p } else { T::zero() })
                .collect();
            res.push((a, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
        }
        &Op::LeakyRelu(a, slope) => {
            let d = g
                .data()
                .iter()
                .zip(val(a).data())
                .map(|(&p, &x)| if x > T::zero() { p } else { p * slope })
                .collect();
            res.push((a, Tensor::from_vec(g.rows(), g.cols(), d).expect("shape")));
        }
        &Op::Transpose(a) => res.push((a, g.transpose())),
        Op::Concat(parts, axis) => {
            let mut start = 0;
            for &p in parts {
                let s = val(p).shape();
                if needs(p) {
                    let piece = if *axis == 0 {
                        let data = g.data()[start * g.cols()..(start + s[0]) * g.cols()].to_vec();
                        Tensor::from_vec(s[0], s[1], data).expect("shape")
                    } else {
                        let mut data = Vec::with_capacity(s[0] * s[1]);
                        for r in 0..s[0] {
                            data.extend_from_slice(&g.row(r)[start..start + s[1]]);
                        }
                        Tensor::from_vec(s[0], s[1], data).expect("shape")
                    };
                    res.push((p, piece));
                }
                start += s[*axis];
            }
        }
        &Op::Sum(a, how) | &Op::Mean(a, how) => {
            let mean = matches!(nodes[id].op, Op::Mean(..));
            let x = val(a);
            let (r, c) = (x.rows(), x.cols());
            let mut d = Tensor::zeros(r, c);
            match how {
                Reduce::All => {
                    let mut v = g.item();
                    if mean {
                        v = v / T::from_usize(r * c).unwrap_or_else(T::one);
                    }
                    d = Tensor::filled(r, c, v);
                }
                Reduce::Axis(0) => {
                    let n = if mean { T::from_usize(r).unwrap_or_else(T::one) } else { T::one() };
                    for i in 0..r {
                        for (o, &v) in d.row_mut(i).iter_mut().zip(g.data()) {
                            *o = v / n;
                        }
                    }
                }
                Reduce::Axis(_) => {
                    let n = if mean { T::from_usize(c).unwrap_or_else(T::one) } else { T::one() };
                    for i in 0..r {
                        let v = g.data()[i] / n;
                        for o in d.row_mut(i) {
                            *o = v;
                        }
                    }
                }
            }
            res.push((a, d));
        }
        &Op::Softmax(a, axis) => {
            let d = if axis == 1 {
                let mut d = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    softmax_backward(out.row(r), g.row(r), d.row_mut(r));
                }
                d
            } else {
                let (yt, gt) = (out.transpose(), g.transpose());
                let mut d = Tensor::zeros(gt.rows(), gt.cols());
                for r in 0..gt.rows() {
                    softmax_backward(yt.row(r), gt.row(r), d.row_mut(r));
                }
                d.transpose()
            };
            res.push((a, d));
        }
        Op::GatherRows(table, idx) => {
            let t = val(*table);
            let mut d = Tensor::zeros(t.rows(), t.cols());
            for (r, &i) in idx.iter().enumerate() {
                for (o, &v) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                    *o = *o + v;
                }
            }
            res.push((*table, d));
        }
        Op::SegmentSoftmax(a, offsets) => {
            let mut d = Tensor::zeros(g.rows(), 1);
            for w in offsets.windows(2) {
                softmax_backward(
                    &out.data()[w[0]..w[1]],
                    &g.data()[w[0]..w[1]],
                    &mut d.data_mut()[w[0]..w[1]],
                );
            }
            res.push((*a, d));
        }
        Op::SegmentSum(a, offsets) => {
            let x = val(*a);
            let mut d = Tensor::zeros(x.rows(), x.cols());
            for (grp, w) in offsets.windows(2).enumerate() {
                for r in w[0]..w[1] {
                    d.row_mut(r).copy_from_slice(g.row(grp));
                }
            }
            res.push((*a, d));
        }
    }
    res
}
