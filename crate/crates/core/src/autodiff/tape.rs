use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use super::tensor::{op_backward, Op, Tensor};
use super::{Real, TensorError};

pub type NodeId = usize;

/// Tensor payload as stored inside a node. Holds no reference back to the
/// tape so recorded nodes never form a reference cycle with it.
#[derive(Clone)]
pub(crate) struct Saved<T> {
    pub data: Arc<Vec<T>>,
    pub shape: Vec<usize>,
    pub id: Option<NodeId>,
}

pub(crate) struct Node<T> {
    pub op: Op<T>,
    pub inputs: Vec<Saved<T>>,
    pub output: Saved<T>,
}

struct TapeInner<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: HashMap<NodeId, Saved<T>>,
    checked: bool,
    higher_order_nodes: usize,
}

/// Records operations on attached tensors. Single-threaded by construction.
pub struct Tape<T: Real> {
    inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Real> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> std::fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                leaf_grads: HashMap::new(),
                checked: false,
                higher_order_nodes: 0,
            })),
        }
    }

    /// A tape that rejects every recorded operation producing NaN or Inf.
    pub fn checked() -> Self {
        let tape = Self::new();
        tape.inner.borrow_mut().checked = true;
        tape
    }

    pub fn is_checked(&self) -> bool {
        self.inner.borrow().checked
    }

    pub fn same_as(&self, other: &Tape<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of nodes that were recorded while differentiating with
    /// `create_graph = true`.
    pub fn higher_order_nodes(&self) -> usize {
        self.inner.borrow().higher_order_nodes
    }

    /// Registers `value` as a differentiable leaf.
    pub fn var(&self, value: Tensor<T>) -> Tensor<T> {
        let (data, shape) = value.into_parts();
        let id = self.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            output: Saved {
                data: Arc::clone(&data),
                shape: shape.clone(),
                id: None,
            },
        });
        Tensor::attached(data, shape, self.clone(), id)
    }

    pub(crate) fn push(&self, mut node: Node<T>) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        node.output.id = Some(id);
        inner.nodes.push(node);
        id
    }

    /// Gradients of the scalar `root` with respect to each tensor in `wrt`.
    ///
    /// Only paths that start at a `wrt` node are followed, so a tensor
    /// created with [`Tensor::alias`] acts as an independent variable even if
    /// the value it aliases has its own history. With `create_graph` the
    /// returned gradients are attached and can be differentiated again.
    pub fn grad(
        &self,
        root: &Tensor<T>,
        wrt: &[&Tensor<T>],
        create_graph: bool,
    ) -> Result<Vec<Option<Tensor<T>>>, TensorError> {
        let root_id = self.check_root(root)?;
        let mut ids = Vec::with_capacity(wrt.len());
        for w in wrt {
            match w.node() {
                Some((tape, id)) if tape.same_as(self) => ids.push(id),
                Some(_) => return Err(TensorError::ForeignTape),
                None => return Err(TensorError::Detached),
            }
        }
        let grads = self.propagate(root_id, &ids, create_graph)?;
        Ok(ids.iter().map(|id| grads.get(id).cloned()).collect())
    }

    /// Accumulates gradients of `root` into every leaf it depends on.
    /// Repeated calls add to what is already stored; see [`Tape::zero_grad`].
    pub fn backward(&self, root: &Tensor<T>, create_graph: bool) -> Result<(), TensorError> {
        let root_id = self.check_root(root)?;
        let leaves: Vec<NodeId> = {
            let inner = self.inner.borrow();
            (0..=root_id)
                .filter(|&i| matches!(inner.nodes[i].op, Op::Leaf))
                .collect()
        };
        let grads = self.propagate(root_id, &leaves, create_graph)?;
        for (id, g) in grads {
            let prev = self.inner.borrow().leaf_grads.get(&id).cloned();
            let total = match prev {
                Some(p) => Tensor::from_saved(&p, Some(self)).add(&g)?,
                None => g,
            };
            let saved = total.to_saved();
            self.inner.borrow_mut().leaf_grads.insert(id, saved);
        }
        Ok(())
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn leaf_grad(&self, leaf: &Tensor<T>) -> Option<Tensor<T>> {
        let (tape, id) = leaf.node()?;
        if !tape.same_as(self) {
            return None;
        }
        let saved = self.inner.borrow().leaf_grads.get(&id).cloned()?;
        Some(Tensor::from_saved(&saved, Some(self)))
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().leaf_grads.clear();
    }

    fn check_root(&self, root: &Tensor<T>) -> Result<NodeId, TensorError> {
        if root.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root.shape().to_vec()));
        }
        match root.node() {
            Some((tape, id)) if tape.same_as(self) => Ok(id),
            Some(_) => Err(TensorError::ForeignTape),
            None => Err(TensorError::Detached),
        }
    }

    fn propagate(
        &self,
        root: NodeId,
        targets: &[NodeId],
        create_graph: bool,
    ) -> Result<HashMap<NodeId, Tensor<T>>, TensorError> {
        let mut out = HashMap::new();
        let Some(&lo) = targets.iter().min() else {
            return Ok(out);
        };
        if lo > root {
            return Ok(out);
        }
        let span = root - lo + 1;
        // Which nodes in [lo, root] depend on a target.
        let mut reach = vec![false; span];
        let mut is_target = vec![false; span];
        {
            let inner = self.inner.borrow();
            for &t in targets {
                if t <= root {
                    reach[t - lo] = true;
                    is_target[t - lo] = true;
                }
            }
            for id in lo..=root {
                if reach[id - lo] {
                    continue;
                }
                reach[id - lo] = inner.nodes[id]
                    .inputs
                    .iter()
                    .any(|s| matches!(s.id, Some(i) if i >= lo && reach[i - lo]));
            }
        }
        if !reach[root - lo] {
            return Ok(out);
        }
        let before = self.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; span];
        let root_shape = self.inner.borrow().nodes[root].output.shape.clone();
        grads[root - lo] = Some(Tensor::full(&root_shape, T::one()));

        let graph_tape = if create_graph { Some(self) } else { None };
        for id in (lo..=root).rev() {
            if !reach[id - lo] {
                continue;
            }
            let Some(g) = grads[id - lo].take() else {
                continue;
            };
            let (op, inputs, output) = {
                let inner = self.inner.borrow();
                let node = &inner.nodes[id];
                (node.op.clone(), node.inputs.clone(), node.output.clone())
            };
            if is_target[id - lo] {
                out.insert(id, g.clone());
            }
            if inputs.is_empty() {
                continue;
            }
            let wanted: Vec<bool> = inputs
                .iter()
                .map(|s| matches!(s.id, Some(i) if i >= lo && reach[i - lo]))
                .collect();
            if !wanted.iter().any(|&w| w) {
                continue;
            }
            let xs: Vec<Tensor<T>> = inputs.iter().map(|s| Tensor::from_saved(s, graph_tape)).collect();
            let y = Tensor::from_saved(&output, graph_tape);
            let g = if create_graph { g } else { g.detach() };
            let input_grads = op_backward(&op, &xs, &y, &g, &wanted)?;
            for ((s, gi), want) in inputs.iter().zip(input_grads).zip(wanted) {
                let (Some(i), Some(gi), true) = (s.id, gi, want) else {
                    continue;
                };
                debug_assert_eq!(gi.shape(), &s.shape[..], "gradient shape for {:?}", op);
                let slot = &mut grads[i - lo];
                *slot = Some(match slot.take() {
                    Some(prev) => prev.add(&gi)?,
                    None => gi,
                });
            }
        }
        if create_graph {
            let added = self.len() - before;
            self.inner.borrow_mut().higher_order_nodes += added;
        }
        Ok(out)
    }
}
