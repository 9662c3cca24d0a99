//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only tape. Every primitive application is
//! evaluated eagerly and appended as a node holding its value, so node
//! indices are a topological order by construction. Gradients are computed
//! by [`Graph::vjp`]; with `create_graph` the gradient computation is itself
//! recorded on the same tape using registered primitives only, which makes
//! the results differentiable again to arbitrary depth.
//!
//! Graphs are single-threaded (`!Sync`) and are meant to be dropped wholesale
//! once a batch is done; nothing is freed in between, so the retained-bytes
//! statistic is a faithful peak for everything recorded.

mod backward;
mod prim;
mod var;

use std::cell::RefCell;
use std::rc::Rc;

pub use prim::{Prim, BUILTIN_PRIMITIVES};
pub use var::{concat, Var};

pub(crate) use prim::{gelu as gelu_fn, softplus as softplus_fn};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Forward kernel of an opaque primitive.
pub type OpaqueForward<T> = Box<dyn Fn(&[&Tensor<T>]) -> Result<Tensor<T>>>;
/// Tensor-level VJP of an opaque primitive: `(inputs, output, cotangent) -> input cotangents`.
pub type OpaqueVjp<T> =
    Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Result<Vec<Tensor<T>>>>;

struct OpaqueOp<T> {
    name: String,
    forward: OpaqueForward<T>,
    vjp: OpaqueVjp<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NodeKind {
    Leaf,
    Constant,
    Op(Prim),
}

pub(crate) struct Node<T> {
    pub(crate) kind: NodeKind,
    pub(crate) inputs: Vec<usize>,
    pub(crate) value: Rc<Tensor<T>>,
}

/// Sizes of a graph. `peak_*` are high-water marks, which differ from the
/// current values only after [`Graph::truncate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub node_count: usize,
    pub retained_bytes: usize,
    pub leaf_count: usize,
    pub peak_nodes: usize,
    pub peak_bytes: usize,
}

struct Inner<T> {
    nodes: Vec<Node<T>>,
    bytes: usize,
    leaves: usize,
    peak_nodes: usize,
    peak_bytes: usize,
    ceiling: Option<usize>,
    opaque: Vec<Rc<OpaqueOp<T>>>,
}

pub struct Graph<T> {
    inner: RefCell<Inner<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                bytes: 0,
                leaves: 0,
                peak_nodes: 0,
                peak_bytes: 0,
                ceiling: None,
                opaque: Vec::new(),
            }),
        }
    }

    /// A graph that refuses to record past `bytes` of retained values.
    pub fn with_ceiling(bytes: usize) -> Self {
        let g = Self::new();
        g.inner.borrow_mut().ceiling = Some(bytes);
        g
    }

    pub fn stats(&self) -> GraphStats {
        let inner = self.inner.borrow();
        GraphStats {
            node_count: inner.nodes.len(),
            retained_bytes: inner.bytes,
            leaf_count: inner.leaves,
            peak_nodes: inner.peak_nodes,
            peak_bytes: inner.peak_bytes,
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// New differentiation target holding `value`.
    pub fn leaf(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        let id = self.push(NodeKind::Leaf, Vec::new(), value)?;
        Ok(Var::new(self, id))
    }

    /// Non-differentiable input data.
    pub fn constant(&self, value: Tensor<T>) -> Result<Var<'_, T>> {
        let id = self.push(NodeKind::Constant, Vec::new(), value)?;
        Ok(Var::new(self, id))
    }

    pub fn scalar_leaf(&self, value: T) -> Result<Var<'_, T>> {
        self.leaf(Tensor::scalar(value))
    }

    /// Applies `prim` to `inputs`, evaluating eagerly and recording the node.
    pub fn apply<'g>(&'g self, prim: Prim, inputs: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        for v in inputs {
            if !std::ptr::eq(v.graph(), self) {
                return Err(Error::ForeignVar);
            }
        }
        let ids: Vec<usize> = inputs.iter().map(|v| v.id()).collect();
        let id = self.apply_ids(prim, ids)?;
        Ok(Var::new(self, id))
    }

    pub(crate) fn apply_ids(&self, prim: Prim, inputs: Vec<usize>) -> Result<usize> {
        let value = {
            let inner = self.inner.borrow();
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|&i| &*inner.nodes[i].value).collect();
            match &prim {
                Prim::Opaque(k) => {
                    let op = inner
                        .opaque
                        .get(*k)
                        .ok_or_else(|| Error::UnregisteredPrimitive(format!("opaque#{k}")))?;
                    (op.forward)(&vals)?
                }
                p => p.forward(&vals)?,
            }
        };
        self.push(NodeKind::Op(prim), inputs, value)
    }

    fn push(&self, kind: NodeKind, inputs: Vec<usize>, value: Tensor<T>) -> Result<usize> {
        let mut inner = self.inner.borrow_mut();
        let bytes = inner.bytes + value.byte_size();
        if let Some(ceiling) = inner.ceiling {
            if bytes > ceiling {
                return Err(Error::MemoryCeiling { bytes, ceiling });
            }
        }
        if kind == NodeKind::Leaf {
            inner.leaves += 1;
        }
        inner.bytes = bytes;
        inner.nodes.push(Node {
            kind,
            inputs,
            value: Rc::new(value),
        });
        inner.peak_bytes = inner.peak_bytes.max(inner.bytes);
        inner.peak_nodes = inner.peak_nodes.max(inner.nodes.len());
        Ok(inner.nodes.len() - 1)
    }

    /// Drops every node from index `len` on. Any `Var` pointing past the new
    /// end must not be used afterwards.
    pub fn truncate(&self, len: usize) {
        let mut inner = self.inner.borrow_mut();
        while inner.nodes.len() > len {
            let node = inner.nodes.pop().expect("non-empty");
            inner.bytes -= node.value.byte_size();
            if node.kind == NodeKind::Leaf {
                inner.leaves -= 1;
            }
        }
    }

    /// Registers a primitive whose VJP is given on raw tensors. Such a
    /// primitive can be differentiated once, but not through `create_graph`.
    pub fn register_opaque(
        &self,
        name: impl Into<String>,
        forward: OpaqueForward<T>,
        vjp: OpaqueVjp<T>,
    ) -> Prim {
        let mut inner = self.inner.borrow_mut();
        inner.opaque.push(Rc::new(OpaqueOp {
            name: name.into(),
            forward,
            vjp,
        }));
        Prim::Opaque(inner.opaque.len() - 1)
    }

    pub(crate) fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.inner.borrow().nodes[id].value)
    }

    pub(crate) fn shape_of(&self, id: usize) -> Shape {
        self.inner.borrow().nodes[id].value.shape().clone()
    }

    pub(crate) fn kind(&self, id: usize) -> NodeKind {
        self.inner.borrow().nodes[id].kind.clone()
    }

    pub(crate) fn node_parts(&self, id: usize) -> (NodeKind, Vec<usize>) {
        let inner = self.inner.borrow();
        let n = &inner.nodes[id];
        (n.kind.clone(), n.inputs.clone())
    }

    pub(crate) fn opaque_name(&self, k: usize) -> String {
        self.inner
            .borrow()
            .opaque
            .get(k)
            .map_or_else(|| format!("opaque#{k}"), |op| op.name.clone())
    }

    pub(crate) fn opaque_vjp(
        &self,
        k: usize,
        inputs: &[usize],
        out: usize,
        g: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let inner = self.inner.borrow();
        let op = inner
            .opaque
            .get(k)
            .ok_or_else(|| Error::UnregisteredPrimitive(format!("opaque#{k}")))?;
        let vals: Vec<&Tensor<T>> = inputs.iter().map(|&i| &*inner.nodes[i].value).collect();
        (op.vjp)(&vals, &inner.nodes[out].value, g)
    }
}
