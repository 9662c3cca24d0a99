use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::nets::BoundNet;
use crate::scalar::Scalar;

/// A pointwise operator `u_ij = f(p_i, x_j)` recorded on a graph.
pub trait Operator<'g, T: Scalar> {
    fn graph(&self) -> &'g Graph<T>;

    /// Coordinate dimension `D`.
    fn dims(&self) -> usize;

    /// Output channels `C`.
    fn channels(&self) -> usize;

    /// `p[M×Q]`, `x[N×D]` to one `M×N` field per channel.
    fn forward_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>>;

    /// Row-aligned `p[K×Q]`, `x[K×D]` to one length-`K` vector per channel.
    fn forward_pointwise_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>>;
}

impl<'g, T: Scalar> Operator<'g, T> for BoundNet<'_, 'g, T> {
    fn graph(&self) -> &'g Graph<T> {
        BoundNet::graph(self)
    }

    fn dims(&self) -> usize {
        self.net().spec.d
    }

    fn channels(&self) -> usize {
        self.net().spec.channels
    }

    fn forward_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        BoundNet::forward_channels(self, p, x)
    }

    fn forward_pointwise_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        BoundNet::forward_pointwise_channels(self, p, x)
    }
}
