use std::sync::Arc;

use super::kernels as k;
use super::tape::{Node, NodeId, Saved, Tape};
use super::{Real, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Recorded operation kinds. Every backward rule is written in terms of
/// other `Tensor` operations so it can itself be recorded.
#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Alias,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(T),
    Tanh,
    Sigmoid,
    Exp,
    Softplus,
    MatMul,
    Transpose,
    BMatVec,
    BMatVecT,
    BOuter,
    SubMeanOuter,
    ScaleRows,
    RowDot,
    SumAll,
    Fill,
    SumAxis(usize),
    Expand { axis: usize },
    Concat { axis: usize, sizes: Vec<usize> },
    Slice { axis: usize, start: usize },
    Pad { axis: usize, start: usize },
    Reshape,
    LogSoftmax,
}

/// Dense row-major array, optionally attached to a [`Tape`].
#[derive(Clone)]
pub struct Tensor<T: Real> {
    data: Arc<Vec<T>>,
    shape: Vec<usize>,
    node: Option<(Tape<T>, NodeId)>,
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("node", &self.node.as_ref().map(|(_, id)| *id))
            .finish()
    }
}

/// Elementwise and structural operations selectable at runtime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp {
    Tanh,
    Sigmoid,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Mean,
    Concat(usize),
}

impl<T: Real> Tensor<T> {
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(TensorError::BadLength {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Self::raw(data, shape.to_vec()))
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        let n = data.len();
        Self::raw(data, vec![n])
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::new(data.iter().map(|&x| T::lit(x)).collect(), shape)
    }

    pub fn scalar(v: T) -> Self {
        Self::raw(vec![v], Vec::new())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::raw(vec![v; shape.iter().product()], shape.to_vec())
    }

    fn raw(data: Vec<T>, shape: Vec<usize>) -> Self {
        Self {
            data: Arc::new(data),
            shape,
            node: None,
        }
    }

    pub(crate) fn attached(data: Arc<Vec<T>>, shape: Vec<usize>, tape: Tape<T>, id: NodeId) -> Self {
        Self {
            data,
            shape,
            node: Some((tape, id)),
        }
    }

    pub(crate) fn into_parts(self) -> (Arc<Vec<T>>, Vec<usize>) {
        (self.data, self.shape)
    }

    pub(crate) fn to_saved(&self) -> Saved<T> {
        Saved {
            data: Arc::clone(&self.data),
            shape: self.shape.clone(),
            id: self.node.as_ref().map(|(_, id)| *id),
        }
    }

    pub(crate) fn from_saved(s: &Saved<T>, tape: Option<&Tape<T>>) -> Self {
        Self {
            data: Arc::clone(&s.data),
            shape: s.shape.clone(),
            node: match (tape, s.id) {
                (Some(t), Some(id)) => Some((t.clone(), id)),
                _ => None,
            },
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data.to_vec()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// First element; the value of a scalar tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn node(&self) -> Option<(Tape<T>, NodeId)> {
        self.node.clone()
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.as_ref().map(|(_, id)| *id)
    }

    pub fn tape(&self) -> Option<&Tape<T>> {
        self.node.as_ref().map(|(t, _)| t)
    }

    pub fn is_attached(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, no history.
    pub fn detach(&self) -> Self {
        Self {
            data: Arc::clone(&self.data),
            shape: self.shape.clone(),
            node: None,
        }
    }

    pub fn all_finite(&self) -> bool {
        // No early exit, so the scan vectorises.
        self.data.iter().fold(true, |ok, v| ok & v.is_finite())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(TensorError::NonFinite(what))
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::raw(
            self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            self.shape.clone(),
        )
    }

    fn record(op: Op<T>, inputs: &[&Tensor<T>], data: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        let mut tape: Option<&Tape<T>> = None;
        for t in inputs {
            if let Some((tt, _)) = &t.node {
                match tape {
                    None => tape = Some(tt),
                    Some(prev) if !prev.same_as(tt) => return Err(TensorError::ForeignTape),
                    _ => {}
                }
            }
        }
        let Some(tape) = tape else {
            return Ok(Self::raw(data, shape));
        };
        if tape.is_checked() && !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite(op_name(&op)));
        }
        let data = Arc::new(data);
        let node = Node {
            op,
            inputs: inputs.iter().map(|t| t.to_saved()).collect(),
            output: Saved {
                data: Arc::clone(&data),
                shape: shape.clone(),
                id: None,
            },
        };
        let id = tape.push(node);
        Ok(Self::attached(data, shape, tape.clone(), id))
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn rank(&self, r: usize, op: &'static str) -> Result<()> {
        if self.shape.len() != r {
            return Err(TensorError::InvalidArgument {
                op,
                msg: format!("expected rank {r}, got shape {:?}", self.shape),
            });
        }
        Ok(())
    }

    /// A fresh node with the same value whose gradient is taken as if it
    /// were an independent input.
    pub fn alias(&self) -> Result<Self> {
        Self::record(Op::Alias, &[self], self.data.to_vec(), self.shape.clone())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        let d = k::zip_map(&self.data, &other.data, |a, b| a + b);
        Self::record(Op::Add, &[self, other], d, self.shape.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let d = k::zip_map(&self.data, &other.data, |a, b| a - b);
        Self::record(Op::Sub, &[self, other], d, self.shape.clone())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "mul")?;
        let d = k::zip_map(&self.data, &other.data, |a, b| a * b);
        Self::record(Op::Mul, &[self, other], d, self.shape.clone())
    }

    pub fn neg(&self) -> Result<Self> {
        Self::record(Op::Neg, &[self], k::map(&self.data, |a| -a), self.shape.clone())
    }

    pub fn scale(&self, c: T) -> Result<Self> {
        Self::record(Op::Scale(c), &[self], k::map(&self.data, |a| a * c), self.shape.clone())
    }

    pub fn tanh(&self) -> Result<Self> {
        Self::record(Op::Tanh, &[self], k::map(&self.data, |a| a.tanh()), self.shape.clone())
    }

    pub fn sigmoid(&self) -> Result<Self> {
        Self::record(Op::Sigmoid, &[self], k::map(&self.data, k::sigmoid), self.shape.clone())
    }

    pub fn exp(&self) -> Result<Self> {
        Self::record(Op::Exp, &[self], k::map(&self.data, |a| a.exp()), self.shape.clone())
    }

    pub fn softplus(&self) -> Result<Self> {
        Self::record(
            Op::Softplus,
            &[self],
            k::map(&self.data, k::softplus),
            self.shape.clone(),
        )
    }

    /// `[m, k] x [k, n] -> [m, n]`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.rank(2, "matmul")?;
        other.rank(2, "matmul")?;
        let (m, kk) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if kk != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let d = k::matmul(&self.data, &other.data, m, kk, n);
        Self::record(Op::MatMul, &[self, other], d, vec![m, n])
    }

    pub fn transpose(&self) -> Result<Self> {
        self.rank(2, "transpose")?;
        let (m, n) = (self.shape[0], self.shape[1]);
        let d = k::transpose(&self.data, m, n);
        Self::record(Op::Transpose, &[self], d, vec![n, m])
    }

    /// Batched matrix-vector product: `self: [b, o, i]`, `x: [b, i]` -> `[b, o]`.
    pub fn bmatvec(&self, x: &Self) -> Result<Self> {
        self.rank(3, "bmatvec")?;
        x.rank(2, "bmatvec")?;
        let (b, o, i) = (self.shape[0], self.shape[1], self.shape[2]);
        if x.shape != [b, i] {
            return Err(TensorError::ShapeMismatch {
                op: "bmatvec",
                left: self.shape.clone(),
                right: x.shape.clone(),
            });
        }
        let d = k::bmatvec(&self.data, &x.data, b, o, i);
        Self::record(Op::BMatVec, &[self, x], d, vec![b, o])
    }

    /// Batched transposed product: `self: [b, o, i]`, `u: [b, o]` -> `[b, i]`.
    pub fn bmatvec_t(&self, u: &Self) -> Result<Self> {
        self.rank(3, "bmatvec_t")?;
        u.rank(2, "bmatvec_t")?;
        let (b, o, i) = (self.shape[0], self.shape[1], self.shape[2]);
        if u.shape != [b, o] {
            return Err(TensorError::ShapeMismatch {
                op: "bmatvec_t",
                left: self.shape.clone(),
                right: u.shape.clone(),
            });
        }
        let d = k::bmatvec_t(&self.data, &u.data, b, o, i);
        Self::record(Op::BMatVecT, &[self, u], d, vec![b, i])
    }

    /// Batched outer product: `self: [b, o]`, `other: [b, i]` -> `[b, o, i]`.
    pub fn bouter(&self, other: &Self) -> Result<Self> {
        self.rank(2, "bouter")?;
        other.rank(2, "bouter")?;
        if self.shape[0] != other.shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "bouter",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let (b, o, i) = (self.shape[0], self.shape[1], other.shape[1]);
        let d = k::bouter(&self.data, &other.data, b, o, i);
        Self::record(Op::BOuter, &[self, other], d, vec![b, o, i])
    }

    /// `self - mean_h a_h c_h^T` for `self: [b, o, i]` and pairs of `[b, o]`,
    /// `[b, i]`. Same rounding as `bouter`, `add`, `scale` and `sub` in
    /// sequence, with no `[b, o, i]` temporaries.
    pub fn sub_mean_outer(&self, pairs: &[(Self, Self)]) -> Result<Self> {
        self.rank(3, "sub_mean_outer")?;
        let (b, o, i) = (self.shape[0], self.shape[1], self.shape[2]);
        if pairs.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "sub_mean_outer",
                msg: "no outer products".into(),
            });
        }
        for (a, c) in pairs {
            if a.shape != [b, o] || c.shape != [b, i] {
                return Err(TensorError::ShapeMismatch {
                    op: "sub_mean_outer",
                    left: self.shape.clone(),
                    right: if a.shape != [b, o] {
                        a.shape.clone()
                    } else {
                        c.shape.clone()
                    },
                });
            }
        }
        let data: Vec<(&[T], &[T])> = pairs.iter().map(|(a, c)| (&a.data[..], &c.data[..])).collect();
        let d = k::sub_mean_outer(&self.data, &data, b, o, i);
        let mut inputs = vec![self];
        for (a, c) in pairs {
            inputs.push(a);
            inputs.push(c);
        }
        Self::record(Op::SubMeanOuter, &inputs, d, self.shape.clone())
    }

    /// Multiplies every entry of row `r` (the leading axis) by `s[r]`.
    pub fn scale_rows(&self, s: &Self) -> Result<Self> {
        if self.shape.is_empty() || s.shape != [self.shape[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                left: self.shape.clone(),
                right: s.shape.clone(),
            });
        }
        let row = self.numel() / self.shape[0];
        let mut d = self.data.to_vec();
        for (chunk, &sv) in d.chunks_mut(row.max(1)).zip(s.data.iter()) {
            for v in chunk {
                *v *= sv;
            }
        }
        Self::record(Op::ScaleRows, &[self, s], d, self.shape.clone())
    }

    /// Per-row inner product over all trailing axes: `[b, ...] -> [b]`.
    pub fn row_dot(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "row_dot")?;
        if self.shape.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "row_dot",
                msg: "needs at least one axis".into(),
            });
        }
        let b = self.shape[0];
        let row = self.numel() / b;
        let d = (0..b)
            .map(|r| k::dot(&self.data[r * row..(r + 1) * row], &other.data[r * row..(r + 1) * row]))
            .collect();
        Self::record(Op::RowDot, &[self, other], d, vec![b])
    }

    pub fn sum(&self) -> Result<Self> {
        let s = self.data.iter().fold(T::zero(), |a, &b| a + b);
        Self::record(Op::SumAll, &[self], vec![s], Vec::new())
    }

    pub fn mean(&self) -> Result<Self> {
        let n = T::lit(self.numel() as f64);
        self.sum()?.scale(T::one() / n)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn fill(&self, shape: &[usize]) -> Result<Self> {
        if self.numel() != 1 {
            return Err(TensorError::InvalidArgument {
                op: "fill",
                msg: format!("source must hold one element, got {:?}", self.shape),
            });
        }
        let d = vec![self.data[0]; shape.iter().product()];
        Self::record(Op::Fill, &[self], d, shape.to_vec())
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        self.check_axis(axis, "sum_axis")?;
        let (o, n, i) = k::axis_split(&self.shape, axis);
        let d = k::sum_axis(&self.data, o, n, i);
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Self::record(Op::SumAxis(axis), &[self], d, shape)
    }

    /// Inserts a new axis of extent `n` at `axis`, repeating values along it.
    pub fn expand(&self, axis: usize, n: usize) -> Result<Self> {
        if axis > self.shape.len() {
            return Err(TensorError::InvalidArgument {
                op: "expand",
                msg: format!("axis {axis} out of range for {:?}", self.shape),
            });
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis..].iter().product();
        let d = k::expand(&self.data, outer, n, inner);
        let mut shape = self.shape.clone();
        shape.insert(axis, n);
        Self::record(Op::Expand { axis }, &[self], d, shape)
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        first.check_axis(axis, "concat")?;
        for p in parts {
            let ok = p.shape.len() == first.shape.len()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(a, (x, y))| a == axis || x == y);
            if !ok {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape[axis]).collect();
        let total: usize = sizes.iter().sum();
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut d = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &n) in parts.iter().zip(&sizes) {
                d.extend_from_slice(&p.data[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Self::record(Op::Concat { axis, sizes }, parts, d, shape)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        self.check_axis(axis, "slice")?;
        if start + len > self.shape[axis] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                msg: format!("{start}+{len} exceeds extent {}", self.shape[axis]),
            });
        }
        let (o, n, i) = k::axis_split(&self.shape, axis);
        let d = k::slice_axis(&self.data, o, n, i, start, len);
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::record(Op::Slice { axis, start }, &[self], d, shape)
    }

    /// Embeds `self` into zeros with extent `total` along `axis`.
    pub fn pad(&self, axis: usize, start: usize, total: usize) -> Result<Self> {
        self.check_axis(axis, "pad")?;
        let len = self.shape[axis];
        if start + len > total {
            return Err(TensorError::InvalidArgument {
                op: "pad",
                msg: format!("{start}+{len} exceeds {total}"),
            });
        }
        let (o, _, i) = k::axis_split(&self.shape, axis);
        let d = k::pad_axis(&self.data, o, len, i, start, total);
        let mut shape = self.shape.clone();
        shape[axis] = total;
        Self::record(Op::Pad { axis, start }, &[self], d, shape)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Self::record(Op::Reshape, &[self], self.data.to_vec(), shape.to_vec())
    }

    /// Row-wise log-softmax of a `[rows, cols]` tensor.
    pub fn log_softmax(&self) -> Result<Self> {
        self.rank(2, "log_softmax")?;
        let d = k::log_softmax_rows(&self.data, self.shape[0], self.shape[1]);
        Self::record(Op::LogSoftmax, &[self], d, self.shape.clone())
    }

    /// Squared L2 norm of the difference, as a scalar.
    pub fn mse(&self, target: &Self) -> Result<Self> {
        self.same_shape(target, "mse")?;
        let diff = self.sub(target)?;
        diff.mul(&diff)?.sum()
    }

    /// Runtime-selected elementwise operation; `Mean` reduces its single
    /// input to a scalar and `Concat` joins all inputs along an axis.
    pub fn apply_elementwise(op: ElementwiseOp, inputs: &[&Self]) -> Result<Self> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() != n {
                Err(TensorError::InvalidArgument {
                    op: "apply_elementwise",
                    msg: format!("{op:?} takes {n} inputs, got {}", inputs.len()),
                })
            } else {
                Ok(())
            }
        };
        match op {
            ElementwiseOp::Tanh => arity(1).and_then(|_| inputs[0].tanh()),
            ElementwiseOp::Sigmoid => arity(1).and_then(|_| inputs[0].sigmoid()),
            ElementwiseOp::Add => arity(2).and_then(|_| inputs[0].add(inputs[1])),
            ElementwiseOp::Sub => arity(2).and_then(|_| inputs[0].sub(inputs[1])),
            ElementwiseOp::Mul => arity(2).and_then(|_| inputs[0].mul(inputs[1])),
            ElementwiseOp::Scale(c) => arity(1).and_then(|_| inputs[0].scale(T::lit(c))),
            ElementwiseOp::Mean => arity(1).and_then(|_| inputs[0].mean()),
            ElementwiseOp::Concat(axis) => Self::concat(inputs, axis),
        }
    }

    fn check_axis(&self, axis: usize, op: &'static str) -> Result<()> {
        if axis >= self.shape.len() {
            return Err(TensorError::InvalidArgument {
                op,
                msg: format!("axis {axis} out of range for {:?}", self.shape),
            });
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Alias => "alias",
        Op::Add => "add",
        Op::Sub => "sub",
        Op::Mul => "mul",
        Op::Neg => "neg",
        Op::Scale(_) => "scale",
        Op::Tanh => "tanh",
        Op::Sigmoid => "sigmoid",
        Op::Exp => "exp",
        Op::Softplus => "softplus",
        Op::MatMul => "matmul",
        Op::Transpose => "transpose",
        Op::BMatVec => "bmatvec",
        Op::BMatVecT => "bmatvec_t",
        Op::BOuter => "bouter",
        Op::SubMeanOuter => "sub_mean_outer",
        Op::ScaleRows => "scale_rows",
        Op::RowDot => "row_dot",
        Op::SumAll => "sum",
        Op::Fill => "fill",
        Op::SumAxis(_) => "sum_axis",
        Op::Expand { .. } => "expand",
        Op::Concat { .. } => "concat",
        Op::Slice { .. } => "slice",
        Op::Pad { .. } => "pad",
        Op::Reshape => "reshape",
        Op::LogSoftmax => "log_softmax",
    }
}

/// Vector-Jacobian products for one node. `want[i]` is false for inputs
/// that do not lead to a requested variable; their slot may be `None`.
pub(crate) fn op_backward<T: Real>(
    op: &Op<T>,
    x: &[Tensor<T>],
    y: &Tensor<T>,
    g: &Tensor<T>,
    want: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let w = |i: usize| want.get(i).copied().unwrap_or(false);
    let both = |a: Option<Tensor<T>>, b: Option<Tensor<T>>| vec![a, b];
    Ok(match op {
        Op::Leaf => Vec::new(),
        Op::Alias => vec![Some(g.clone())],
        Op::Add => both(Some(g.clone()), Some(g.clone())),
        Op::Sub => both(Some(g.clone()), if w(1) { Some(g.neg()?) } else { None }),
        Op::Mul => both(
            if w(0) { Some(g.mul(&x[1])?) } else { None },
            if w(1) { Some(g.mul(&x[0])?) } else { None },
        ),
        Op::Neg => vec![Some(g.neg()?)],
        Op::Scale(c) => vec![Some(g.scale(*c)?)],
        Op::Tanh => {
            // g (1 - y^2)
            let gy = g.mul(y)?;
            vec![Some(g.sub(&gy.mul(y)?)?)]
        }
        Op::Sigmoid => {
            // g y (1 - y)
            let gy = g.mul(y)?;
            vec![Some(gy.sub(&gy.mul(y)?)?)]
        }
        Op::Exp => vec![Some(g.mul(y)?)],
        Op::Softplus => vec![Some(g.mul(&x[0].sigmoid()?)?)],
        Op::MatMul => both(
            if w(0) {
                Some(g.matmul(&x[1].transpose()?)?)
            } else {
                None
            },
            if w(1) { Some(x[0].transpose()?.matmul(g)?) } else { None },
        ),
        Op::Transpose => vec![Some(g.transpose()?)],
        Op::BMatVec => both(
            if w(0) { Some(g.bouter(&x[1])?) } else { None },
            if w(1) { Some(x[0].bmatvec_t(g)?) } else { None },
        ),
        Op::BMatVecT => both(
            if w(0) { Some(x[1].bouter(g)?) } else { None },
            if w(1) { Some(x[0].bmatvec(g)?) } else { None },
        ),
        Op::BOuter => both(
            if w(0) { Some(g.bmatvec(&x[1])?) } else { None },
            if w(1) { Some(g.bmatvec_t(&x[0])?) } else { None },
        ),
        Op::SubMeanOuter => {
            let heads = (x.len() - 1) / 2;
            let neg = T::lit(-1.0 / heads as f64);
            let mut out = vec![Some(g.clone())];
            for h in 0..heads {
                let (a, c) = (&x[1 + 2 * h], &x[2 + 2 * h]);
                out.push(if w(1 + 2 * h) {
                    Some(g.bmatvec(c)?.scale(neg)?)
                } else {
                    None
                });
                out.push(if w(2 + 2 * h) {
                    Some(g.bmatvec_t(a)?.scale(neg)?)
                } else {
                    None
                });
            }
            out
        }
        Op::ScaleRows => both(
            if w(0) { Some(g.scale_rows(&x[1])?) } else { None },
            if w(1) { Some(g.row_dot(&x[0])?) } else { None },
        ),
        Op::RowDot => both(
            if w(0) { Some(x[1].scale_rows(g)?) } else { None },
            if w(1) { Some(x[0].scale_rows(g)?) } else { None },
        ),
        Op::SumAll => vec![Some(g.fill(x[0].shape())?)],
        Op::Fill => vec![Some(g.sum()?.reshape(x[0].shape())?)],
        Op::SumAxis(axis) => vec![Some(g.expand(*axis, x[0].shape()[*axis])?)],
        Op::Expand { axis } => vec![Some(g.sum_axis(*axis)?)],
        Op::Concat { axis, sizes } => {
            let mut out = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for (i, &n) in sizes.iter().enumerate() {
                out.push(if w(i) { Some(g.slice(*axis, start, n)?) } else { None });
                start += n;
            }
            out
        }
        Op::Slice { axis, start } => {
            vec![Some(g.pad(*axis, *start, x[0].shape()[*axis])?)]
        }
        Op::Pad { axis, start } => {
            vec![Some(g.slice(*axis, *start, x[0].shape()[*axis])?)]
        }
        Op::Reshape => vec![Some(g.reshape(x[0].shape())?)],
        Op::LogSoftmax => {
            // g - softmax(x) * rowsum(g)
            let cols = y.shape()[1];
            let rowsum = g.sum_axis(1)?.expand(1, cols)?;
            vec![Some(g.sub(&y.exp()?.mul(&rowsum)?)?)]
        }
    })
}
