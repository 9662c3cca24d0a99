//! Reverse sweep. VJP rules are written once against [`Builder`]; the
//! recording builder appends every cotangent operation to the tape (so the
//! result can be differentiated again), the eager builder works on raw
//! tensors and leaves the tape untouched.

use std::rc::Rc;

use super::prim::{inv_sqrt_2pi, ERF_SCALE};
use super::{Graph, NodeKind, Prim, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

trait Builder<T: Scalar> {
    type H: Clone;

    fn node(&self, id: usize) -> Self::H;
    fn shape(&self, h: &Self::H) -> Shape;
    fn apply(&mut self, prim: Prim, inputs: &[&Self::H]) -> Result<Self::H>;
    fn opaque(
        &mut self,
        k: usize,
        inputs: &[usize],
        out: usize,
        g: &Self::H,
    ) -> Result<Vec<Self::H>>;

    fn un(&mut self, prim: Prim, a: &Self::H) -> Result<Self::H> {
        self.apply(prim, &[a])
    }

    fn bin(&mut self, prim: Prim, a: &Self::H, b: &Self::H) -> Result<Self::H> {
        self.apply(prim, &[a, b])
    }

    /// `g` summed down to `shape` when broadcasting widened it.
    fn reduce_to(&mut self, g: &Self::H, shape: &Shape) -> Result<Self::H> {
        if self.shape(g) == *shape {
            Ok(g.clone())
        } else {
            self.un(Prim::SumTo(shape.clone()), g)
        }
    }
}

struct Recording<'a, T> {
    graph: &'a Graph<T>,
}

impl<T: Scalar> Builder<T> for Recording<'_, T> {
    type H = usize;

    fn node(&self, id: usize) -> usize {
        id
    }

    fn shape(&self, h: &usize) -> Shape {
        self.graph.shape_of(*h)
    }

    fn apply(&mut self, prim: Prim, inputs: &[&usize]) -> Result<usize> {
        self.graph
            .apply_ids(prim, inputs.iter().map(|&&i| i).collect())
    }

    fn opaque(&mut self, k: usize, _: &[usize], _: usize, _: &usize) -> Result<Vec<usize>> {
        Err(Error::NotTwiceDifferentiable(self.graph.opaque_name(k)))
    }
}

struct Eager<'a, T> {
    graph: &'a Graph<T>,
}

impl<T: Scalar> Builder<T> for Eager<'_, T> {
    type H = Rc<Tensor<T>>;

    fn node(&self, id: usize) -> Rc<Tensor<T>> {
        self.graph.value(id)
    }

    fn shape(&self, h: &Rc<Tensor<T>>) -> Shape {
        h.shape().clone()
    }

    fn apply(&mut self, prim: Prim, inputs: &[&Rc<Tensor<T>>]) -> Result<Rc<Tensor<T>>> {
        let vals: Vec<&Tensor<T>> = inputs.iter().map(|t| &***t).collect();
        prim.forward(&vals).map(Rc::new)
    }

    fn opaque(
        &mut self,
        k: usize,
        inputs: &[usize],
        out: usize,
        g: &Rc<Tensor<T>>,
    ) -> Result<Vec<Rc<Tensor<T>>>> {
        Ok(self
            .graph
            .opaque_vjp(k, inputs, out, g)?
            .into_iter()
            .map(Rc::new)
            .collect())
    }
}

/// Cotangents of the inputs of node `out` (only where `needed`).
fn vjp_rule<T: Scalar, B: Builder<T>>(
    b: &mut B,
    prim: &Prim,
    inputs: &[usize],
    out: usize,
    g: &B::H,
    needed: &[bool],
) -> Result<Vec<Option<B::H>>> {
    let x = |b: &B, k: usize| b.node(inputs[k]);
    let mut res: Vec<Option<B::H>> = vec![None; inputs.len()];
    match prim {
        Prim::Add | Prim::Sub => {
            if needed[0] {
                let s = b.shape(&x(b, 0));
                res[0] = Some(b.reduce_to(g, &s)?);
            }
            if needed[1] {
                let s = b.shape(&x(b, 1));
                let gb = if *prim == Prim::Sub {
                    b.un(Prim::Neg, g)?
                } else {
                    g.clone()
                };
                res[1] = Some(b.reduce_to(&gb, &s)?);
            }
        }
        Prim::Mul => {
            for (k, other) in [(0, 1), (1, 0)] {
                if needed[k] {
                    let s = b.shape(&x(b, k));
                    let o = x(b, other);
                    let gk = b.bin(Prim::Mul, g, &o)?;
                    res[k] = Some(b.reduce_to(&gk, &s)?);
                }
            }
        }
        Prim::Div => {
            let den = x(b, 1);
            if needed[0] {
                let s = b.shape(&x(b, 0));
                let ga = b.bin(Prim::Div, g, &den)?;
                res[0] = Some(b.reduce_to(&ga, &s)?);
            }
            if needed[1] {
                let s = b.shape(&den);
                let y = b.node(out);
                let gy = b.bin(Prim::Mul, g, &y)?;
                let q = b.bin(Prim::Div, &gy, &den)?;
                let gb = b.un(Prim::Neg, &q)?;
                res[1] = Some(b.reduce_to(&gb, &s)?);
            }
        }
        Prim::Pow(c) => {
            let c = *c;
            let xv = x(b, 0);
            res[0] = Some(if c == 0.0 {
                b.un(Prim::Scale(0.0), g)?
            } else if c == 1.0 {
                g.clone()
            } else {
                let d = if c == 2.0 {
                    xv
                } else {
                    b.un(Prim::Pow(c - 1.0), &xv)?
                };
                let gd = b.bin(Prim::Mul, g, &d)?;
                b.un(Prim::Scale(c), &gd)?
            });
        }
        Prim::Neg => res[0] = Some(b.un(Prim::Neg, g)?),
        Prim::Scale(c) => res[0] = Some(b.un(Prim::Scale(*c), g)?),
        Prim::AddScalar(_) => res[0] = Some(g.clone()),
        Prim::Exp => {
            let y = b.node(out);
            res[0] = Some(b.bin(Prim::Mul, g, &y)?);
        }
        Prim::Sin => {
            let c = b.un(Prim::Cos, &x(b, 0))?;
            res[0] = Some(b.bin(Prim::Mul, g, &c)?);
        }
        Prim::Cos => {
            let s = b.un(Prim::Sin, &x(b, 0))?;
            let gs = b.bin(Prim::Mul, g, &s)?;
            res[0] = Some(b.un(Prim::Neg, &gs)?);
        }
        Prim::Tanh => {
            // g·(1 − y²)
            let y = b.node(out);
            let y2 = b.bin(Prim::Mul, &y, &y)?;
            let gy2 = b.bin(Prim::Mul, g, &y2)?;
            res[0] = Some(b.bin(Prim::Sub, g, &gy2)?);
        }
        Prim::Erf => {
            let xv = x(b, 0);
            let x2 = b.bin(Prim::Mul, &xv, &xv)?;
            let e = b.un(Prim::Scale(-1.0), &x2)?;
            let e = b.un(Prim::Exp, &e)?;
            let ge = b.bin(Prim::Mul, g, &e)?;
            res[0] = Some(b.un(Prim::Scale(ERF_SCALE), &ge)?);
        }
        Prim::Sigmoid => {
            // g·s·(1 − s)
            let s = b.node(out);
            let gs = b.bin(Prim::Mul, g, &s)?;
            let gss = b.bin(Prim::Mul, &gs, &s)?;
            res[0] = Some(b.bin(Prim::Sub, &gs, &gss)?);
        }
        Prim::Softplus => {
            let s = b.un(Prim::Sigmoid, &x(b, 0))?;
            res[0] = Some(b.bin(Prim::Mul, g, &s)?);
        }
        Prim::Gelu => {
            // g·(Φ(x) + x·φ(x))
            let xv = x(b, 0);
            let u = b.un(Prim::Scale(std::f64::consts::FRAC_1_SQRT_2), &xv)?;
            let e = b.un(Prim::Erf, &u)?;
            let cdf = b.un(Prim::Scale(0.5), &e)?;
            let cdf = b.un(Prim::AddScalar(0.5), &cdf)?;
            let x2 = b.bin(Prim::Mul, &xv, &xv)?;
            let h = b.un(Prim::Scale(-0.5), &x2)?;
            let pdf = b.un(Prim::Exp, &h)?;
            let pdf = b.un(Prim::Scale(inv_sqrt_2pi()), &pdf)?;
            let xp = b.bin(Prim::Mul, &xv, &pdf)?;
            let d = b.bin(Prim::Add, &cdf, &xp)?;
            res[0] = Some(b.bin(Prim::Mul, g, &d)?);
        }
        Prim::MatMul => {
            if needed[0] {
                let bt = b.un(Prim::Transpose, &x(b, 1))?;
                res[0] = Some(b.bin(Prim::MatMul, g, &bt)?);
            }
            if needed[1] {
                let at = b.un(Prim::Transpose, &x(b, 0))?;
                res[1] = Some(b.bin(Prim::MatMul, &at, g)?);
            }
        }
        Prim::Transpose => res[0] = Some(b.un(Prim::Transpose, g)?),
        Prim::Sum(axes) | Prim::Mean(axes) => {
            let s = b.shape(&x(b, 0));
            let mut keep = s.dims().to_vec();
            let mut reduced = vec![false; keep.len()];
            for &a in axes {
                reduced[a] = true;
                keep[a] = 1;
            }
            let count: usize = (0..keep.len())
                .filter(|&k| reduced[k])
                .map(|k| s.dims()[k])
                .product();
            let keep = Shape::new(keep);
            let gk = if b.shape(g) == keep {
                g.clone()
            } else {
                b.un(Prim::Reshape(keep), g)?
            };
            let mut gx = b.un(Prim::BroadcastTo(s), &gk)?;
            if matches!(prim, Prim::Mean(_)) && count > 0 {
                gx = b.un(Prim::Scale(1.0 / count as f64), &gx)?;
            }
            res[0] = Some(gx);
        }
        Prim::SumTo(_) => {
            let s = b.shape(&x(b, 0));
            res[0] = Some(b.un(Prim::BroadcastTo(s), g)?);
        }
        Prim::BroadcastTo(_) => {
            let s = b.shape(&x(b, 0));
            res[0] = Some(b.reduce_to(g, &s)?);
        }
        Prim::Reshape(_) => {
            let s = b.shape(&x(b, 0));
            res[0] = Some(b.un(Prim::Reshape(s), g)?);
        }
        Prim::Concat(axis) => {
            let mut offset = 0;
            for k in 0..inputs.len() {
                let extent = b.shape(&x(b, k)).dims()[*axis];
                if needed[k] {
                    res[k] = Some(b.un(
                        Prim::Slice {
                            axis: *axis,
                            start: offset,
                            end: offset + extent,
                        },
                        g,
                    )?);
                }
                offset += extent;
            }
        }
        Prim::Slice { axis, start, end } => {
            let extent = b.shape(&x(b, 0)).dims()[*axis];
            res[0] = Some(b.un(
                Prim::Pad {
                    axis: *axis,
                    before: *start,
                    after: extent - end,
                },
                g,
            )?);
        }
        Prim::Pad { axis, before, .. } => {
            let extent = b.shape(&x(b, 0)).dims()[*axis];
            res[0] = Some(b.un(
                Prim::Slice {
                    axis: *axis,
                    start: *before,
                    end: before + extent,
                },
                g,
            )?);
        }
        Prim::Opaque(k) => {
            for (slot, v) in res.iter_mut().zip(b.opaque(*k, inputs, out, g)?) {
                *slot = Some(v);
            }
        }
    }
    Ok(res)
}

/// Reverse sweep from `root` (seeded with `seed`) to each of `targets`.
/// Returns `None` for targets the root does not depend on.
fn sweep<T: Scalar, B: Builder<T>>(
    graph: &Graph<T>,
    b: &mut B,
    root: usize,
    seed: B::H,
    targets: &[usize],
) -> Result<Vec<Option<B::H>>> {
    let Some(&lo) = targets.iter().min() else {
        return Ok(Vec::new());
    };
    if root < lo {
        return Ok(vec![None; targets.len()]);
    }
    let span = root - lo + 1;
    let mut is_target = vec![false; span];
    for &t in targets {
        if t <= root {
            is_target[t - lo] = true;
        }
    }
    // depends[n]: node n is a function of some target
    let mut depends = is_target.clone();
    for n in lo..=root {
        if depends[n - lo] {
            continue;
        }
        let (kind, inputs) = graph.node_parts(n);
        if let NodeKind::Op(_) = kind {
            depends[n - lo] = inputs.iter().any(|&i| i >= lo && depends[i - lo]);
        }
    }
    let mut found: Vec<Option<B::H>> = vec![None; span];
    if !depends[root - lo] {
        return Ok(vec![None; targets.len()]);
    }
    let mut cots: Vec<Option<B::H>> = vec![None; span];
    cots[root - lo] = Some(seed);
    for n in (lo..=root).rev() {
        let Some(g) = cots[n - lo].take() else {
            continue;
        };
        if is_target[n - lo] {
            found[n - lo] = Some(g.clone());
        }
        let (kind, inputs) = graph.node_parts(n);
        let NodeKind::Op(prim) = kind else {
            continue;
        };
        let needed: Vec<bool> = inputs.iter().map(|&i| i >= lo && depends[i - lo]).collect();
        if !needed.iter().any(|&x| x) {
            continue;
        }
        let contributions = vjp_rule(b, &prim, &inputs, n, &g, &needed)?;
        for ((&i, need), c) in inputs.iter().zip(&needed).zip(contributions) {
            if !need {
                continue;
            }
            let Some(c) = c else { continue };
            let slot = &mut cots[i - lo];
            *slot = Some(match slot.take() {
                None => c,
                Some(prev) => b.bin(Prim::Add, &prev, &c)?,
            });
        }
    }
    Ok(targets
        .iter()
        .map(|&t| {
            if t <= root {
                found[t - lo].clone()
            } else {
                None
            }
        })
        .collect())
}

impl<T: Scalar> Graph<T> {
    fn check_vars(&self, vars: &[Var<'_, T>]) -> Result<()> {
        if vars.iter().all(|v| std::ptr::eq(v.graph(), self)) {
            Ok(())
        } else {
            Err(Error::ForeignVar)
        }
    }

    /// Vector-Jacobian product `∂⟨cotangent, root⟩/∂leaf` for every leaf.
    ///
    /// With `create_graph` the results are recorded nodes of this graph and
    /// can be differentiated again. Otherwise they are constants. Leaves the
    /// root does not depend on receive exact zeros.
    pub fn vjp<'g>(
        &'g self,
        root: Var<'g, T>,
        cotangent: &Tensor<T>,
        leaves: &[Var<'g, T>],
        create_graph: bool,
    ) -> Result<Vec<Var<'g, T>>> {
        self.check_vars(&[root])?;
        self.check_vars(leaves)?;
        let root_shape = root.shape();
        if *cotangent.shape() != root_shape {
            return Err(Error::CotangentShape {
                root: root_shape,
                cotangent: cotangent.shape().clone(),
            });
        }
        let targets: Vec<usize> = leaves.iter().map(|v| v.id()).collect();
        if create_graph {
            let seed = self.constant(cotangent.clone())?.id();
            let mut b = Recording { graph: self };
            let found = sweep(self, &mut b, root.id(), seed, &targets)?;
            found
                .into_iter()
                .zip(leaves)
                .map(|(f, leaf)| match f {
                    Some(id) => Ok(Var::new(self, id)),
                    None => self.constant(Tensor::zeros(leaf.shape())),
                })
                .collect()
        } else {
            let grads = self.vjp_tensors(root, cotangent, leaves)?;
            grads.into_iter().map(|t| self.constant(t)).collect()
        }
    }

    /// Like [`Graph::vjp`] without `create_graph`, returning plain tensors
    /// and recording nothing.
    pub fn vjp_tensors<'g>(
        &'g self,
        root: Var<'g, T>,
        cotangent: &Tensor<T>,
        leaves: &[Var<'g, T>],
    ) -> Result<Vec<Tensor<T>>> {
        self.check_vars(&[root])?;
        self.check_vars(leaves)?;
        let root_shape = root.shape();
        if *cotangent.shape() != root_shape {
            return Err(Error::CotangentShape {
                root: root_shape,
                cotangent: cotangent.shape().clone(),
            });
        }
        let targets: Vec<usize> = leaves.iter().map(|v| v.id()).collect();
        let mut b = Eager { graph: self };
        let found = sweep(
            self,
            &mut b,
            root.id(),
            Rc::new(cotangent.clone()),
            &targets,
        )?;
        Ok(found
            .into_iter()
            .zip(leaves)
            .map(|(f, leaf)| match f {
                Some(t) => Rc::try_unwrap(t).unwrap_or_else(|rc| (*rc).clone()),
                None => Tensor::zeros(leaf.shape()),
            })
            .collect())
    }

    /// Gradient of a scalar root with respect to several leaves.
    pub fn grad<'g>(
        &'g self,
        root: Var<'g, T>,
        leaves: &[Var<'g, T>],
        create_graph: bool,
    ) -> Result<Vec<Var<'g, T>>> {
        let shape = root.shape();
        if shape.numel() != 1 || shape.rank() != 0 {
            return Err(Error::NonScalarRoot(shape));
        }
        self.vjp(root, &Tensor::scalar(T::one()), leaves, create_graph)
    }

    /// Gradient of a scalar root with respect to one leaf.
    pub fn grad_scalar<'g>(
        &'g self,
        root: Var<'g, T>,
        leaf: Var<'g, T>,
        create_graph: bool,
    ) -> Result<Var<'g, T>> {
        Ok(self.grad(root, &[leaf], create_graph)?.remove(0))
    }
}
