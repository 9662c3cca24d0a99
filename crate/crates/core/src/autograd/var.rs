use std::rc::Rc;

use super::{Graph, NodeKind, Prim};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Handle to a node of a [`Graph`].
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T: Scalar> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{}, {})", self.id, self.shape())
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub(crate) fn new(graph: &'g Graph<T>, id: usize) -> Self {
        Var { graph, id }
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Shape {
        self.graph.shape_of(self.id)
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> Option<T> {
        self.value().item()
    }

    pub fn is_leaf(&self) -> bool {
        self.graph.kind(self.id) == NodeKind::Leaf
    }

    fn un(self, prim: Prim) -> Result<Self> {
        self.graph.apply(prim, &[self])
    }

    fn bin(self, prim: Prim, other: Self) -> Result<Self> {
        self.graph.apply(prim, &[self, other])
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.bin(Prim::Add, other)
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.bin(Prim::Sub, other)
    }

    pub fn mul(self, other: Self) -> Result<Self> {
        self.bin(Prim::Mul, other)
    }

    pub fn div(self, other: Self) -> Result<Self> {
        self.bin(Prim::Div, other)
    }

    pub fn matmul(self, other: Self) -> Result<Self> {
        self.bin(Prim::MatMul, other)
    }

    pub fn powf(self, exponent: f64) -> Result<Self> {
        self.un(Prim::Pow(exponent))
    }

    pub fn square(self) -> Result<Self> {
        self.mul(self)
    }

    pub fn neg(self) -> Result<Self> {
        self.un(Prim::Neg)
    }

    pub fn scale(self, c: f64) -> Result<Self> {
        self.un(Prim::Scale(c))
    }

    pub fn add_scalar(self, c: f64) -> Result<Self> {
        self.un(Prim::AddScalar(c))
    }

    pub fn exp(self) -> Result<Self> {
        self.un(Prim::Exp)
    }

    pub fn sin(self) -> Result<Self> {
        self.un(Prim::Sin)
    }

    pub fn cos(self) -> Result<Self> {
        self.un(Prim::Cos)
    }

    pub fn tanh(self) -> Result<Self> {
        self.un(Prim::Tanh)
    }

    pub fn erf(self) -> Result<Self> {
        self.un(Prim::Erf)
    }

    pub fn sigmoid(self) -> Result<Self> {
        self.un(Prim::Sigmoid)
    }

    pub fn softplus(self) -> Result<Self> {
        self.un(Prim::Softplus)
    }

    pub fn gelu(self) -> Result<Self> {
        self.un(Prim::Gelu)
    }

    pub fn t(self) -> Result<Self> {
        self.un(Prim::Transpose)
    }

    pub fn sum(self, axes: &[usize]) -> Result<Self> {
        self.un(Prim::Sum(axes.to_vec()))
    }

    pub fn sum_all(self) -> Result<Self> {
        let axes: Vec<usize> = (0..self.shape().rank()).collect();
        self.un(Prim::Sum(axes))
    }

    pub fn mean(self, axes: &[usize]) -> Result<Self> {
        self.un(Prim::Mean(axes.to_vec()))
    }

    pub fn mean_all(self) -> Result<Self> {
        let axes: Vec<usize> = (0..self.shape().rank()).collect();
        self.un(Prim::Mean(axes))
    }

    pub fn sum_to(self, shape: impl Into<Shape>) -> Result<Self> {
        self.un(Prim::SumTo(shape.into()))
    }

    pub fn broadcast_to(self, shape: impl Into<Shape>) -> Result<Self> {
        self.un(Prim::BroadcastTo(shape.into()))
    }

    pub fn reshape(self, shape: impl Into<Shape>) -> Result<Self> {
        self.un(Prim::Reshape(shape.into()))
    }

    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Self> {
        self.un(Prim::Slice { axis, start, end })
    }

    pub fn pad(self, axis: usize, before: usize, after: usize) -> Result<Self> {
        self.un(Prim::Pad {
            axis,
            before,
            after,
        })
    }

    /// Column `j` of a rank-2 variable as a rank-1 variable.
    pub fn column(self, j: usize) -> Result<Self> {
        let dims = self.shape();
        let rows = dims.dim(0)?;
        self.slice(1, j, j + 1)?.reshape([rows])
    }

    /// Row `i` of a rank-2 variable as a rank-1 variable.
    pub fn row(self, i: usize) -> Result<Self> {
        let dims = self.shape();
        let cols = dims.dim(1)?;
        self.slice(0, i, i + 1)?.reshape([cols])
    }
}

/// Concatenates variables of one graph along `axis`.
pub fn concat<'g, T: Scalar>(parts: &[Var<'g, T>], axis: usize) -> Result<Var<'g, T>> {
    let first = parts
        .first()
        .ok_or_else(|| crate::error::Error::Config("concat of zero variables".into()))?;
    first.graph().apply(Prim::Concat(axis), parts)
}
