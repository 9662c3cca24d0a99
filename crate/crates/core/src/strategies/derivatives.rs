use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use super::{DerivativeRequest, Field, LinearTerm, Operator, ProductTerm};
use crate::autograd::{concat, Graph, GraphStats, Var};
use crate::error::{Error, Result};
use crate::nets::DeepONet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How coordinate derivatives of `u[M×N]` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One scalar root `Σ_j u_ij` per function `i`.
    FuncLoop,
    /// Inputs duplicated to `M·N` rows and evaluated pointwise.
    DataVect,
    /// Zero coordinate shift: scalar shift leaves plus a dummy weight leaf.
    Zcs,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FuncLoop, Strategy::DataVect, Strategy::Zcs];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::FuncLoop => "funcloop",
            Strategy::DataVect => "datavect",
            Strategy::Zcs => "zcs",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "funcloop" | "func_loop" | "loop" => Ok(Strategy::FuncLoop),
            "datavect" | "data_vect" | "vect" => Ok(Strategy::DataVect),
            "zcs" => Ok(Strategy::Zcs),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// How product terms are evaluated under ZCS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProductMode {
    /// Extract both factors, then multiply.
    #[default]
    PerTerm,
    /// Half the diagonal of `∂²(ω_l·ω_r)/∂a²`. Needs one reverse pass per
    /// element of `a`, so it is only practical for small `M·N`. Other
    /// strategies ignore this and multiply.
    SecondOrder,
}

impl fmt::Display for ProductMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProductMode::PerTerm => "per_term",
            ProductMode::SecondOrder => "second_order",
        })
    }
}

impl FromStr for ProductMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "per_term" | "termwise" => Ok(ProductMode::PerTerm),
            "second_order" => Ok(ProductMode::SecondOrder),
            _ => Err(Error::Config(format!("unknown product mode `{s}`"))),
        }
    }
}

enum State<'g, T> {
    Loop {
        /// One length-N row per function.
        rows: BTreeMap<Field, Vec<Var<'g, T>>>,
    },
    Vect {
        /// Length `M·N`, function-major.
        flat: BTreeMap<Field, Var<'g, T>>,
    },
    Zcs {
        omega: BTreeMap<Field, Var<'g, T>>,
        a: Vec<Var<'g, T>>,
        z: Vec<Var<'g, T>>,
    },
}

/// Coordinate derivatives of one batch, recorded on a graph.
///
/// The derivative tree for the request is built eagerly by
/// [`Derivatives::compute`]; fields, combinations and products are
/// assembled on demand. Everything returned stays differentiable with
/// respect to the network parameters.
pub struct Derivatives<'g, T> {
    graph: &'g Graph<T>,
    strategy: Strategy,
    m: usize,
    n: usize,
    forward: Duration,
    u: Vec<Var<'g, T>>,
    state: State<'g, T>,
    cache: RefCell<HashMap<Field, Var<'g, T>>>,
}

fn one<T: Scalar>() -> Tensor<T> {
    Tensor::scalar(T::one())
}

/// `child field → (parent field, dimension)` grouped by parent.
fn children(req: &DerivativeRequest) -> BTreeMap<Field, Vec<(usize, Field)>> {
    let mut out: BTreeMap<Field, Vec<(usize, Field)>> = BTreeMap::new();
    for f in req.closure() {
        if let Some((parent, k)) = f.index.parent() {
            out.entry(Field::new(f.channel, parent))
                .or_default()
                .push((k, f));
        }
    }
    out
}

fn column<'g, T: Scalar>(g: Var<'g, T>, d: usize, dims: usize) -> Result<Var<'g, T>> {
    if dims == 1 {
        let rows = g.shape().dims()[0];
        g.reshape([rows])
    } else {
        g.column(d)
    }
}

impl<'g, T: Scalar> Derivatives<'g, T> {
    /// Runs the forward pass and every nested coordinate derivative the
    /// request needs. `p` is `M×Q` and `x` is `N×D`.
    pub fn compute(
        strategy: Strategy,
        net: &dyn Operator<'g, T>,
        p: &Tensor<T>,
        x: &Tensor<T>,
        req: &DerivativeRequest,
    ) -> Result<Self> {
        req.validate(None)?;
        if req.dims != net.dims() || req.channels != net.channels() {
            return Err(Error::Config(format!(
                "request is for D={} C={}, operator has D={} C={}",
                req.dims,
                req.channels,
                net.dims(),
                net.channels()
            )));
        }
        let m = p.shape().dim(0)?;
        let n = x.shape().dim(0)?;
        match strategy {
            Strategy::FuncLoop => Self::func_loop(net, p, x, req, m, n),
            Strategy::DataVect => Self::data_vect(net, p, x, req, m, n),
            Strategy::Zcs => Self::zcs(net, p, x, req, m, n),
        }
    }

    fn func_loop(
        net: &dyn Operator<'g, T>,
        p: &Tensor<T>,
        x: &Tensor<T>,
        req: &DerivativeRequest,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let graph = net.graph();
        let start = Instant::now();
        let pv = graph.constant(p.clone())?;
        let xv = graph.leaf(x.clone())?;
        let u = net.forward_channels(pv, xv)?;
        let forward = start.elapsed();
        let mut rows: BTreeMap<Field, Vec<Var<'g, T>>> = BTreeMap::new();
        for c in 0..req.channels {
            let r = (0..m).map(|i| u[c].row(i)).collect::<Result<Vec<_>>>()?;
            rows.insert(Field::new(c, super::MultiIndex::zero(req.dims)), r);
        }
        for (parent, kids) in children(req) {
            let mut out: Vec<Vec<Var<'g, T>>> = vec![Vec::with_capacity(m); kids.len()];
            for i in 0..m {
                let root = rows[&parent][i].sum_all()?;
                let g = graph.vjp(root, &one(), &[xv], true)?[0];
                for (slot, (d, _)) in kids.iter().enumerate() {
                    out[slot].push(column(g, *d, req.dims)?);
                }
            }
            for ((_, f), r) in kids.into_iter().zip(out) {
                rows.insert(f, r);
            }
        }
        Ok(Self::assemble(
            graph,
            Strategy::FuncLoop,
            (m, n),
            forward,
            u,
            State::Loop { rows },
        ))
    }

    fn data_vect(
        net: &dyn Operator<'g, T>,
        p: &Tensor<T>,
        x: &Tensor<T>,
        req: &DerivativeRequest,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let graph = net.graph();
        let start = Instant::now();
        let (q, d) = (p.shape().dim(1)?, x.shape().dim(1)?);
        let ph = Tensor::from_fn([m * n, q], |k| p.data()[(k / q) / n * q + k % q]);
        let xh = Tensor::from_fn([m * n, d], |k| x.data()[(k / d) % n * d + k % d]);
        let pv = graph.constant(ph)?;
        let xv = graph.leaf(xh)?;
        let flat_u = net.forward_pointwise_channels(pv, xv)?;
        let forward = start.elapsed();
        let mut flat = BTreeMap::new();
        for (c, uc) in flat_u.iter().enumerate() {
            flat.insert(Field::new(c, super::MultiIndex::zero(req.dims)), *uc);
        }
        for (parent, kids) in children(req) {
            let root = flat[&parent].sum_all()?;
            let g = graph.vjp(root, &one(), &[xv], true)?[0];
            for (k, f) in kids {
                flat.insert(f, column(g, k, req.dims)?);
            }
        }
        let u = flat_u
            .into_iter()
            .map(|v| v.reshape([m, n]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(
            graph,
            Strategy::DataVect,
            (m, n),
            forward,
            u,
            State::Vect { flat },
        ))
    }

    fn zcs(
        net: &dyn Operator<'g, T>,
        p: &Tensor<T>,
        x: &Tensor<T>,
        req: &DerivativeRequest,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let graph = net.graph();
        let start = Instant::now();
        let z = (0..req.dims)
            .map(|_| graph.scalar_leaf(T::zero()))
            .collect::<Result<Vec<_>>>()?;
        let shifts = z
            .iter()
            .map(|zd| zd.reshape([1]))
            .collect::<Result<Vec<_>>>()?;
        let shift = if shifts.len() == 1 {
            shifts[0]
        } else {
            concat(&shifts, 0)?
        };
        let xs = graph.constant(x.clone())?.add(shift)?;
        let pv = graph.constant(p.clone())?;
        let u = net.forward_channels(pv, xs)?;
        let forward = start.elapsed();
        let mut a = Vec::with_capacity(req.channels);
        let mut omega = BTreeMap::new();
        for (c, uc) in u.iter().enumerate() {
            let ac = graph.leaf(Tensor::ones([m, n]))?;
            omega.insert(
                Field::new(c, super::MultiIndex::zero(req.dims)),
                ac.mul(*uc)?.sum_all()?,
            );
            a.push(ac);
        }
        for (parent, kids) in children(req) {
            let leaves: Vec<Var<'g, T>> = kids.iter().map(|(k, _)| z[*k]).collect();
            let grads = graph.vjp(omega[&parent], &one(), &leaves, true)?;
            for ((_, f), g) in kids.into_iter().zip(grads) {
                omega.insert(f, g);
            }
        }
        Ok(Self::assemble(
            graph,
            Strategy::Zcs,
            (m, n),
            forward,
            u,
            State::Zcs { omega, a, z },
        ))
    }

    fn assemble(
        graph: &'g Graph<T>,
        strategy: Strategy,
        (m, n): (usize, usize),
        forward: Duration,
        u: Vec<Var<'g, T>>,
        state: State<'g, T>,
    ) -> Self {
        Derivatives {
            graph,
            strategy,
            m,
            n,
            forward,
            u,
            state,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Wall time of the network forward pass inside [`Derivatives::compute`].
    pub fn forward_time(&self) -> Duration {
        self.forward
    }

    /// The network output `u[M×N]` of one channel.
    pub fn output(&self, channel: usize) -> Result<Var<'g, T>> {
        self.u
            .get(channel)
            .copied()
            .ok_or_else(|| Error::Config(format!("no output channel {channel}")))
    }

    /// `∂ⁿω/∂zⁿ` for a requested field (ZCS only).
    pub fn omega(&self, f: &Field) -> Option<Var<'g, T>> {
        match &self.state {
            State::Zcs { omega, .. } => omega.get(f).copied(),
            _ => None,
        }
    }

    /// The dummy weight leaf `a` of one channel (ZCS only).
    pub fn dummy(&self, channel: usize) -> Option<Var<'g, T>> {
        match &self.state {
            State::Zcs { a, .. } => a.get(channel).copied(),
            _ => None,
        }
    }

    /// The scalar shift leaves, one per dimension (ZCS only).
    pub fn shifts(&self) -> Option<&[Var<'g, T>]> {
        match &self.state {
            State::Zcs { z, .. } => Some(z),
            _ => None,
        }
    }

    fn missing(f: &Field) -> Error {
        Error::Config(format!("field {f} was not requested"))
    }

    /// The derivative field `∂^α u_c` as an `M×N` variable.
    pub fn field(&self, f: &Field) -> Result<Var<'g, T>> {
        if f.index.is_zero() {
            return self.output(f.channel);
        }
        if let Some(v) = self.cache.borrow().get(f) {
            return Ok(*v);
        }
        let v = match &self.state {
            State::Loop { rows } => {
                let r = rows.get(f).ok_or_else(|| Self::missing(f))?;
                let parts = r
                    .iter()
                    .map(|row| row.reshape([1, self.n]))
                    .collect::<Result<Vec<_>>>()?;
                if parts.len() == 1 {
                    parts[0]
                } else {
                    concat(&parts, 0)?
                }
            }
            State::Vect { flat } => flat
                .get(f)
                .ok_or_else(|| Self::missing(f))?
                .reshape([self.m, self.n])?,
            State::Zcs { omega, a, .. } => {
                let w = omega.get(f).ok_or_else(|| Self::missing(f))?;
                self.graph.grad_scalar(*w, a[f.channel], true)?
            }
        };
        self.cache.borrow_mut().insert(f.clone(), v);
        Ok(v)
    }

    /// `Σ coeff · field`. Under ZCS the weighted `ω` derivatives are summed
    /// first so the whole combination costs one pass per involved channel.
    pub fn combination(&self, terms: &[LinearTerm]) -> Result<Var<'g, T>> {
        if terms.is_empty() {
            return Err(Error::Config("empty combination".into()));
        }
        if let State::Zcs { omega, a, .. } = &self.state {
            let mut root: Option<Var<'g, T>> = None;
            let mut channels: Vec<usize> = Vec::new();
            for t in terms {
                let w = omega.get(&t.field).ok_or_else(|| Self::missing(&t.field))?;
                let term = w.scale(t.coeff)?;
                root = Some(match root {
                    Some(r) => r.add(term)?,
                    None => term,
                });
                if !channels.contains(&t.field.channel) {
                    channels.push(t.field.channel);
                }
            }
            let leaves: Vec<Var<'g, T>> = channels.iter().map(|&c| a[c]).collect();
            let grads = self
                .graph
                .vjp(root.expect("non-empty"), &one(), &leaves, true)?;
            let mut acc = grads[0];
            for g in &grads[1..] {
                acc = acc.add(*g)?;
            }
            return Ok(acc);
        }
        let mut acc: Option<Var<'g, T>> = None;
        for t in terms {
            let term = self.field(&t.field)?.scale(t.coeff)?;
            acc = Some(match acc {
                Some(r) => r.add(term)?,
                None => term,
            });
        }
        Ok(acc.expect("non-empty"))
    }

    pub fn product(&self, term: &ProductTerm, mode: ProductMode) -> Result<Var<'g, T>> {
        self.product_sum(std::slice::from_ref(term), mode)
    }

    /// `Σ left ⊙ right` over several product terms.
    pub fn product_sum(&self, terms: &[ProductTerm], mode: ProductMode) -> Result<Var<'g, T>> {
        if terms.is_empty() {
            return Err(Error::Config("empty product sum".into()));
        }
        if let (ProductMode::SecondOrder, State::Zcs { omega, a, .. }) = (mode, &self.state) {
            let channel = terms[0].left.channel;
            let mut root: Option<Var<'g, T>> = None;
            for t in terms {
                if t.left.channel != channel || t.right.channel != channel {
                    return Err(Error::Config(
                        "second-order product extraction needs a single channel".into(),
                    ));
                }
                let l = omega.get(&t.left).ok_or_else(|| Self::missing(&t.left))?;
                let r = omega.get(&t.right).ok_or_else(|| Self::missing(&t.right))?;
                let prod = l.mul(*r)?;
                root = Some(match root {
                    Some(acc) => acc.add(prod)?,
                    None => prod,
                });
            }
            return half_hessian_diagonal(root.expect("non-empty"), a[channel]);
        }
        let mut acc: Option<Var<'g, T>> = None;
        for t in terms {
            let prod = self.field(&t.left)?.mul(self.field(&t.right)?)?;
            acc = Some(match acc {
                Some(r) => r.add(prod)?,
                None => prod,
            });
        }
        Ok(acc.expect("non-empty"))
    }
}

/// `½·diag(∂²F/∂a²)` recorded on the graph, one reverse pass per element.
fn half_hessian_diagonal<'g, T: Scalar>(f: Var<'g, T>, a: Var<'g, T>) -> Result<Var<'g, T>> {
    let graph = a.graph();
    let shape = a.shape();
    let g = graph.grad_scalar(f, a, true)?;
    let mut acc: Option<Var<'g, T>> = None;
    for k in 0..shape.numel() {
        let unit = Tensor::unit(shape.clone(), k);
        let row = graph.vjp(g, &unit, &[a], true)?[0];
        let picked = row.mul(graph.constant(unit)?)?;
        acc = Some(match acc {
            Some(r) => r.add(picked)?,
            None => picked,
        });
    }
    acc.expect("non-empty leaf").scale(0.5)
}

/// Product field `(∂ᵐu)(∂ⁿu) = ½·∂²(ω_m·ω_n)/∂a_ij²` from two `z`-derivatives
/// of `ω`, as a plain tensor.
///
/// Reverse mode yields Hessian-vector products, so the diagonal is read off
/// one element at a time.
pub fn zcs_product<T: Scalar>(
    omega_m: Var<'_, T>,
    omega_n: Var<'_, T>,
    a: Var<'_, T>,
) -> Result<Tensor<T>> {
    if !a.is_leaf() {
        return Err(Error::NotALeaf(a.id()));
    }
    let graph = a.graph();
    let shape = a.shape();
    let f = omega_m.mul(omega_n)?;
    let g = graph.grad_scalar(f, a, true)?;
    let half = T::lit(0.5);
    let mut out = Tensor::zeros(shape.clone());
    for k in 0..shape.numel() {
        let row = graph.vjp_tensors(g, &Tensor::unit(shape.clone(), k), &[a])?;
        out.data_mut()[k] = half * row[0].data()[k];
    }
    Ok(out)
}

/// Evaluated derivative fields for one batch.
#[derive(Debug, Clone)]
pub struct DerivativeBundle<T> {
    pub strategy: Strategy,
    pub m: usize,
    pub n: usize,
    pub fields: BTreeMap<Field, Tensor<T>>,
    pub products: BTreeMap<ProductTerm, Tensor<T>>,
    pub combinations: Vec<Tensor<T>>,
    pub stats: GraphStats,
}

impl<T: Scalar> DerivativeBundle<T> {
    pub fn get(&self, f: &Field) -> Option<&Tensor<T>> {
        self.fields.get(f)
    }
}

/// Evaluates every term of `req` on a fresh graph.
pub fn derive<T: Scalar>(
    strategy: Strategy,
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    req: &DerivativeRequest,
    mode: ProductMode,
) -> Result<DerivativeBundle<T>> {
    let graph = Graph::new();
    let bound = net.bind(&graph)?;
    let d = Derivatives::compute(strategy, &bound, p, x, req)?;
    let mut fields = BTreeMap::new();
    for f in req.fields() {
        fields.insert(f.clone(), d.field(&f)?.value().as_ref().clone());
    }
    let mut products = BTreeMap::new();
    for t in &req.products {
        products.insert(t.clone(), d.product(t, mode)?.value().as_ref().clone());
    }
    let combinations = req
        .combinations
        .iter()
        .map(|c| Ok(d.combination(c)?.value().as_ref().clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DerivativeBundle {
        strategy,
        m: d.m(),
        n: d.n(),
        fields,
        products,
        combinations,
        stats: graph.stats(),
    })
}

pub fn derive_funcloop<T: Scalar>(
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    req: &DerivativeRequest,
) -> Result<DerivativeBundle<T>> {
    derive(Strategy::FuncLoop, net, p, x, req, ProductMode::PerTerm)
}

pub fn derive_datavect<T: Scalar>(
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    req: &DerivativeRequest,
) -> Result<DerivativeBundle<T>> {
    derive(Strategy::DataVect, net, p, x, req, ProductMode::PerTerm)
}

pub fn derive_zcs<T: Scalar>(
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    req: &DerivativeRequest,
) -> Result<DerivativeBundle<T>> {
    derive(Strategy::Zcs, net, p, x, req, ProductMode::PerTerm)
}

/// Single-function case: root `Σ_j u_j`, nested gradients with respect to
/// the coordinates. `p` must have exactly one row.
pub fn pinn_derivative<T: Scalar>(
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    req: &DerivativeRequest,
) -> Result<DerivativeBundle<T>> {
    if p.shape().dim(0)? != 1 {
        return Err(Error::Config(format!(
            "single-function derivative needs one parameter row, got {}",
            p.shape()
        )));
    }
    derive_funcloop(net, p, x, req)
}
