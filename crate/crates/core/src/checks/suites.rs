//! Property suites: each property reports a measured value against a bound.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd::{fd_field, rel_max_error, FdConfig};
use crate::autograd::{concat, Graph, Var};
use crate::bench::{measure_batch, BenchCase, BenchSpec};
use crate::error::{Error, Result};
use crate::nets::{init_params, Activation, DeepONet, NetSpec};
use crate::pde::{build_batch, make_problem, ProblemKind, ProblemOptions};
use crate::sampling::{sample_points, SampleMode};
use crate::strategies::{
    derive, zcs_product, DerivativeRequest, Derivatives, Field, LinearTerm, MultiIndex,
    ProductMode, Strategy,
};
use crate::tensor::Tensor;
use crate::train::{loss_and_grad, sample_functions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Equivalence,
    Identities,
    Gradcheck,
    ScalingInvariants,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Equivalence,
        Suite::Identities,
        Suite::Gradcheck,
        Suite::ScalingInvariants,
    ];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Equivalence => "equivalence",
            Suite::Identities => "identities",
            Suite::Gradcheck => "gradcheck",
            Suite::ScalingInvariants => "scaling-invariants",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.to_string() == s.replace('_', "-"))
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Property {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Property {
            name: name.into(),
            value,
            bound: Bound::AtMost(tol),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Property {
            name: name.into(),
            value,
            bound: Bound::AtLeast(min),
        }
    }

    /// NaN never passes.
    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost(t) => self.value <= t,
            Bound::AtLeast(t) => self.value >= t,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let (op, t) = match self.bound {
            Bound::AtMost(t) => ("<=", t),
            Bound::AtLeast(t) => (">=", t),
        };
        write!(
            f,
            "{verdict} {}: {:.3e} {op} {:.3e}",
            self.name, self.value, t
        )
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Property>> {
    match suite {
        Suite::Equivalence => equivalence(20, seed),
        Suite::Identities => identities(seed),
        Suite::Gradcheck => gradcheck(seed),
        Suite::ScalingInvariants => scaling_invariants(&BenchSpec::default()),
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 2], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// A Glorot-initialised net with random biases, so that no derivative
/// vanishes by symmetry.
pub fn random_net(spec: &NetSpec, seed: u64) -> Result<DeepONet<f64>> {
    let mut net = init_params(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for mlp in [&mut net.branch, &mut net.trunk] {
        for b in &mut mlp.biases {
            *b = Tensor::from_fn(b.shape().clone(), |_| rng.gen_range(-0.5..0.5));
        }
    }
    net.beta = Tensor::from_fn(net.beta.shape().clone(), |_| rng.gen_range(-0.5..0.5));
    Ok(net)
}

fn all_fields(d: usize, c: usize, max_order: usize) -> DerivativeRequest {
    let mut req = DerivativeRequest::new(d, c);
    for ch in 0..c {
        for mi in MultiIndex::all_up_to(d, max_order) {
            req = req.with_field(Field::new(ch, mi));
        }
    }
    req
}

/// Random nets, batch sizes and dimensions; every multi-index up to order
/// 4 through all three strategies, compared pairwise and against a
/// finite-difference stencil.
pub fn equivalence(configs: usize, seed: u64) -> Result<Vec<Property>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * configs);
    for k in 0..configs {
        let d = rng.gen_range(1..=2);
        let (m, n) = (rng.gen_range(1..=8), rng.gen_range(1..=32));
        let q = rng.gen_range(1..=5);
        let c = rng.gen_range(1..=2);
        let mut spec = NetSpec::uniform(
            q,
            d,
            rng.gen_range(4..=32),
            rng.gen_range(1..=3),
            rng.gen_range(1..=8),
            c,
        );
        spec.activation =
            [Activation::Tanh, Activation::Gelu, Activation::Softplus][rng.gen_range(0..3)];
        let net = random_net(&spec, rng.gen())?;
        let p = uniform(&mut rng, [m, q], -1.0, 1.0);
        let x = uniform(&mut rng, [n, d], -1.0, 1.0);
        let req = all_fields(d, c, 4);
        let bundles = Strategy::ALL
            .iter()
            .map(|&s| derive(s, &net, &p, &x, &req, ProductMode::PerTerm))
            .collect::<Result<Vec<_>>>()?;
        let (mut pair, mut fd) = (0.0f64, 0.0f64);
        for f in req.fields() {
            let reference = fd_field(&net, &p, &x, &f, FdConfig::default())?;
            for (i, a) in bundles.iter().enumerate() {
                fd = fd.max(rel_max_error(&a.fields[&f], &reference));
                for b in &bundles[i + 1..] {
                    pair = pair.max(rel_max_error(&a.fields[&f], &b.fields[&f]));
                }
            }
        }
        let tag = format!(
            "config {k} (M={m} N={n} D={d} C={c} {} width {} depth {})",
            spec.activation,
            spec.trunk_hidden[0],
            spec.trunk_hidden.len()
        );
        out.push(Property::at_most(
            format!("{tag} strategies agree"),
            pair,
            1e-8,
        ));
        out.push(Property::at_most(
            format!("{tag} matches finite differences"),
            fd,
            1e-5,
        ));
    }
    Ok(out)
}

/// The dummy-leaf extraction, the second-order product identity and the
/// termwise-versus-combined evaluation of a mixed residual.
pub fn identities(seed: u64) -> Result<Vec<Property>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let net = random_net(&NetSpec::uniform(3, 1, 16, 2, 6, 1), rng.gen())?;
    let p = uniform(&mut rng, [4, 3], -1.0, 1.0);
    let x = uniform(&mut rng, [12, 1], -1.0, 1.0);
    let req = all_fields(1, 1, 4);
    let zcs = derive(Strategy::Zcs, &net, &p, &x, &req, ProductMode::PerTerm)?;
    let fl = derive(Strategy::FuncLoop, &net, &p, &x, &req, ProductMode::PerTerm)?;
    for order in 1..=4 {
        let f = Field::of([order]);
        out.push(Property::at_most(
            format!("dummy-leaf gradient of the order-{order} shift derivative equals the per-function field"),
            rel_max_error(&zcs.fields[&f], &fl.fields[&f]),
            1e-8,
        ));
    }

    let graph = Graph::new();
    let bound = net.bind(&graph)?;
    let d = Derivatives::compute(Strategy::Zcs, &bound, &p, &x, &all_fields(1, 1, 2))?;
    let a = d.dummy(0).ok_or(Error::MissingField("dummy leaf".into()))?;
    for (m, n) in [(0, 1), (1, 1), (1, 2), (2, 2)] {
        let (fm, fn_) = (Field::of([m]), Field::of([n]));
        let omega = |f: &Field| d.omega(f).ok_or_else(|| Error::MissingField(f.to_string()));
        let got = zcs_product(omega(&fm)?, omega(&fn_)?, a)?;
        let want = d.field(&fm)?.value().mul(&d.field(&fn_)?.value())?;
        let reference = fl.fields[&fm].mul(&fl.fields[&fn_])?;
        out.push(Property::at_most(
            format!("half second dummy derivative gives the ({m},{n}) product"),
            rel_max_error(&got, &want).max(rel_max_error(&got, &reference)),
            1e-8,
        ));
    }

    // g = u_x + u_y + u_xy + u_x·u_y + u_xx·u_yy, term by term and combined
    let net = random_net(&NetSpec::uniform(2, 2, 16, 2, 6, 1), rng.gen())?;
    let p = uniform(&mut rng, [3, 2], -1.0, 1.0);
    let x = uniform(&mut rng, [10, 2], -1.0, 1.0);
    let (ux, uy, uxy, uxx, uyy) = (
        Field::of([1, 0]),
        Field::of([0, 1]),
        Field::of([1, 1]),
        Field::of([2, 0]),
        Field::of([0, 2]),
    );
    let req = DerivativeRequest::new(2, 1)
        .with_combination(vec![
            LinearTerm::new(ux.clone(), 1.0),
            LinearTerm::new(uy.clone(), 1.0),
            LinearTerm::new(uxy.clone(), 1.0),
        ])
        .with_product(ux.clone(), uy.clone())
        .with_product(uxx.clone(), uyy.clone());
    let graph = Graph::new();
    let bound = net.bind(&graph)?;
    let d = Derivatives::compute(Strategy::Zcs, &bound, &p, &x, &req)?;
    let field = |f: &Field| -> Result<Tensor<f64>> { Ok(d.field(f)?.value().as_ref().clone()) };
    let termwise = field(&ux)?
        .add(&field(&uy)?)?
        .add(&field(&uxy)?)?
        .add(&field(&ux)?.mul(&field(&uy)?)?)?
        .add(&field(&uxx)?.mul(&field(&uyy)?)?)?;
    let combined = d
        .combination(&req.combinations[0])?
        .add(d.product_sum(&req.products, ProductMode::SecondOrder)?)?
        .value();
    out.push(Property::at_most(
        "mixed residual: termwise and combined evaluation orders agree",
        rel_max_error(&combined, &termwise),
        1e-8,
    ));
    let fl = derive(Strategy::FuncLoop, &net, &p, &x, &req, ProductMode::PerTerm)?;
    let fl_g = fl.combinations[0]
        .add(&fl.products[&req.products[0]])?
        .add(&fl.products[&req.products[1]])?;
    out.push(Property::at_most(
        "mixed residual: combined form equals the per-function loop",
        rel_max_error(&combined, &fl_g),
        1e-8,
    ));

    // nesting y then x instead of the built-in x then y
    let z = d
        .shifts()
        .ok_or(Error::MissingField("shift leaves".into()))?;
    let wy = d.omega(&uy).ok_or(Error::MissingField(uy.to_string()))?;
    let wyx = graph.grad_scalar(wy, z[0], true)?;
    let yx = graph
        .grad_scalar(
            wyx,
            d.dummy(0).ok_or(Error::MissingField("dummy leaf".into()))?,
            false,
        )?
        .value();
    out.push(Property::at_most(
        "mixed partials commute",
        rel_max_error(&yx, &d.field(&uxy)?.value()),
        1e-10,
    ));
    Ok(out)
}

/// Central differences of `f` at `x` along every coordinate.
fn fd_grad(
    f: &dyn Fn(&Tensor<f64>) -> Result<f64>,
    x: &Tensor<f64>,
    h: f64,
) -> Result<Tensor<f64>> {
    let mut out = Tensor::zeros(x.shape().clone());
    for i in 0..x.numel() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        out.data_mut()[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
    }
    Ok(out)
}

type Build = dyn for<'g> Fn(&[Var<'g, f64>]) -> Result<Var<'g, f64>>;

/// Worst relative error of the VJP of `build` against central differences
/// of a random linear functional of its output.
fn primitive_error(inputs: &[Tensor<f64>], build: &Build, rng: &mut ChaCha8Rng) -> Result<f64> {
    let graph = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| graph.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&vars)?;
    let dims = out.shape().dims().to_vec();
    let w = Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0));
    let grads = graph.vjp(out, &w, &vars, true)?;
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vs = vals
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(build(&vs)?.value().mul(&w)?.sum_all())
    };
    let mut worst = 0.0f64;
    for (k, grad) in grads.iter().enumerate() {
        let f = |t: &Tensor<f64>| {
            let mut vals = inputs.to_vec();
            vals[k] = t.clone();
            eval(&vals)
        };
        worst = worst.max(rel_max_error(
            &grad.value(),
            &fd_grad(&f, &inputs[k], 1e-6)?,
        ));
    }
    Ok(worst)
}

/// n-th derivative of tanh in terms of t = tanh(x), n ≤ 4.
fn tanh_derivative(n: usize, x: f64) -> f64 {
    let t = x.tanh();
    let s = 1.0 - t * t;
    match n {
        1 => s,
        2 => -2.0 * t * s,
        3 => (6.0 * t * t - 2.0) * s,
        _ => 8.0 * t * s * (2.0 - 3.0 * t * t),
    }
}

/// Every built-in primitive against finite differences, the tanh derivative
/// tower, linearity in the cotangent, and the parameter gradient of full
/// physics losses through the shift path.
pub fn gradcheck(seed: u64) -> Result<Vec<Property>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let a23 = uniform(&mut rng, [2, 3], -2.0, 2.0);
    let b23 = uniform(&mut rng, [2, 3], -2.0, 2.0);
    let a34 = uniform(&mut rng, [3, 4], -2.0, 2.0);
    let b3 = Tensor::<f64>::from_fn([3], |_| rng.gen_range(-2.0..2.0));
    let pos = a23.map(|v| v.abs() + 0.5);
    let den = b3.map(|v| v.signum() * (v.abs() + 0.5));
    let cases: Vec<(&str, Vec<Tensor<f64>>, Box<Build>)> = vec![
        (
            "add",
            vec![a23.clone(), b3.clone()],
            Box::new(|v| v[0].add(v[1])),
        ),
        (
            "sub",
            vec![a23.clone(), b23.clone()],
            Box::new(|v| v[0].sub(v[1])),
        ),
        (
            "mul",
            vec![a23.clone(), b3.clone()],
            Box::new(|v| v[0].mul(v[1])),
        ),
        ("div", vec![a23.clone(), den], Box::new(|v| v[0].div(v[1]))),
        ("pow", vec![pos], Box::new(|v| v[0].powf(2.5))),
        ("neg", vec![a23.clone()], Box::new(|v| v[0].neg())),
        ("scale", vec![a23.clone()], Box::new(|v| v[0].scale(-1.5))),
        (
            "add_scalar",
            vec![a23.clone()],
            Box::new(|v| v[0].add_scalar(0.7)),
        ),
        ("exp", vec![a23.clone()], Box::new(|v| v[0].exp())),
        ("sin", vec![a23.clone()], Box::new(|v| v[0].sin())),
        ("cos", vec![a23.clone()], Box::new(|v| v[0].cos())),
        ("tanh", vec![a23.clone()], Box::new(|v| v[0].tanh())),
        ("erf", vec![a23.clone()], Box::new(|v| v[0].erf())),
        ("sigmoid", vec![a23.clone()], Box::new(|v| v[0].sigmoid())),
        ("softplus", vec![a23.clone()], Box::new(|v| v[0].softplus())),
        ("gelu", vec![a23.clone()], Box::new(|v| v[0].gelu())),
        (
            "matmul",
            vec![a23.clone(), a34.clone()],
            Box::new(|v| v[0].matmul(v[1])),
        ),
        ("transpose", vec![a34.clone()], Box::new(|v| v[0].t())),
        (
            "reduce_sum",
            vec![a34.clone()],
            Box::new(|v| v[0].sum(&[1])),
        ),
        (
            "reduce_mean",
            vec![a34.clone()],
            Box::new(|v| v[0].mean(&[0])),
        ),
        (
            "sum_to",
            vec![a34.clone()],
            Box::new(|v| v[0].sum_to([1, 4])),
        ),
        (
            "broadcast_to",
            vec![b3],
            Box::new(|v| v[0].broadcast_to([4, 3])),
        ),
        (
            "reshape",
            vec![a34.clone()],
            Box::new(|v| v[0].reshape([2, 6])),
        ),
        (
            "concat",
            vec![a23.clone(), b23],
            Box::new(|v| concat(&[v[0], v[1]], 0)),
        ),
        ("slice", vec![a34], Box::new(|v| v[0].slice(1, 1, 3))),
        ("pad", vec![a23], Box::new(|v| v[0].pad(0, 1, 2))),
    ];
    for (name, inputs, build) in &cases {
        let err = primitive_error(inputs, build.as_ref(), &mut rng)?;
        out.push(Property::at_most(
            format!("primitive {name} matches finite differences"),
            err,
            1e-5,
        ));
    }

    let graph = Graph::<f64>::new();
    let x = graph.scalar_leaf(0.3)?;
    let mut d = x.tanh()?;
    let mut worst = 0.0f64;
    for n in 1..=4 {
        d = graph.grad_scalar(d, x, true)?;
        let want = tanh_derivative(n, 0.3);
        worst = worst.max(((d.item().unwrap_or(f64::NAN) - want) / want).abs());
    }
    out.push(Property::at_most(
        "nested tanh derivatives up to order 4",
        worst,
        1e-6,
    ));

    let graph = Graph::<f64>::new();
    let x = graph.leaf(uniform(&mut rng, [4, 3], -2.0, 2.0))?;
    let w = graph.constant(uniform(&mut rng, [3, 5], -1.0, 1.0))?;
    let y = x.matmul(w)?.tanh()?;
    let c1 = uniform(&mut rng, [4, 5], -1.0, 1.0);
    let c2 = uniform(&mut rng, [4, 5], -1.0, 1.0);
    let (alpha, beta) = (0.7, -1.9);
    let lhs = graph
        .vjp_tensors(y, &c1.scale(alpha).add(&c2.scale(beta))?, &[x])?
        .remove(0);
    let g1 = graph.vjp_tensors(y, &c1, &[x])?.remove(0);
    let g2 = graph.vjp_tensors(y, &c2, &[x])?.remove(0);
    let diff = lhs.sub(&g1.scale(alpha).add(&g2.scale(beta))?)?.max_abs();
    out.push(Property::at_most("cotangent linearity", diff, 1e-12));

    for kind in [ProblemKind::Burgers, ProblemKind::Kirchhoff] {
        let err = theta_gradient_error(kind, seed)?;
        out.push(Property::at_most(
            format!("{kind} loss gradient with respect to the parameters"),
            err,
            1e-4,
        ));
    }
    Ok(out)
}

/// Worst per-tensor relative error of dLoss/dθ through the shift path
/// against central differences with step 1e-5, on a tiny configuration.
pub fn theta_gradient_error(kind: ProblemKind, seed: u64) -> Result<f64> {
    let options = ProblemOptions {
        sensors: 6,
        kirchhoff_modes: 2,
        ..Default::default()
    };
    let problem = make_problem(kind, &options)?;
    let spec = NetSpec::uniform(
        problem.features,
        problem.dims(),
        6,
        2,
        4,
        problem.channels(),
    );
    let net = init_params::<f64>(&spec, seed)?;
    let functions = sample_functions::<f64>(&problem, 4, 0.2, seed + 1)?;
    let points = sample_points(&problem, 10, 3, 3, SampleMode::UniformRandom, seed + 2)?;
    let batch = build_batch(&problem, &functions, &[0, 1, 3], &points)?;
    let loss = |n: &DeepONet<f64>| {
        loss_and_grad(
            &problem,
            n,
            Strategy::Zcs,
            ProductMode::PerTerm,
            &batch,
            None,
        )
    };
    let step = loss(&net)?;
    let base = net.params();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, t) in base.tensors.iter().enumerate() {
        let f = |v: &Tensor<f64>| -> Result<f64> {
            let mut p = base.clone();
            p.tensors[ti] = v.clone();
            let mut n = net.clone();
            n.set_params(&p)?;
            Ok(loss(&n)?.loss)
        };
        worst = worst.max(rel_max_error(&step.grads[ti], &fd_grad(&f, t, h)?));
    }
    Ok(worst)
}

/// Graph accounting across `M` at fixed `N = 512`, `P = 2`.
pub fn scaling_invariants(spec: &BenchSpec) -> Result<Vec<Property>> {
    let (n, p, big) = (512, 2, 64);
    let spec = BenchSpec {
        ceiling: None,
        ..spec.clone()
    };
    let point = |s, m| measure_batch::<f64>(s, m, n, p, &spec);
    let mut out = Vec::new();
    let mut losses = Vec::new();
    let mut bytes = Vec::new();
    for s in Strategy::ALL {
        let one = point(s, 1)?;
        let many = point(s, big)?;
        let get = |v: Option<usize>| v.map_or(f64::NAN, |v| v as f64);
        let ratio = get(many.retained_bytes) / get(one.retained_bytes);
        match s {
            Strategy::Zcs => {
                let branch = |m| BenchCase::<f64>::new(m, n, p, &spec)?.branch_nodes();
                let growth = get(many.nodes) - get(one.nodes);
                let branch_growth = branch(big)? as f64 - branch(1)? as f64;
                out.push(Property::at_most(
                    format!("{s} node growth from M=1 to M={big} minus branch-forward growth"),
                    (growth - branch_growth).abs(),
                    0.0,
                ));
                out.push(Property::at_most(
                    format!("{s} retained-bytes ratio M={big}/M=1"),
                    ratio,
                    2.0,
                ));
            }
            _ => out.push(Property::at_least(
                format!("{s} retained-bytes ratio M={big}/M=1"),
                ratio,
                0.8 * big as f64,
            )),
        }
        bytes.push(get(many.retained_bytes));
        losses.push(one.loss.unwrap_or(f64::NAN));
        losses.push(many.loss.unwrap_or(f64::NAN));
    }
    out.push(Property::at_most(
        format!("retained bytes at M={big}: shift over function loop"),
        bytes[2] / bytes[0],
        0.25,
    ));
    let mut worst = 0.0f64;
    for k in 0..2 {
        let reference = losses[k];
        for s in 1..Strategy::ALL.len() {
            worst = worst.max(((losses[2 * s + k] - reference) / reference).abs());
        }
    }
    out.push(Property::at_most(
        "loss agrees across strategies",
        worst,
        1e-6,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert_eq!(
            "scaling_invariants".parse::<Suite>().unwrap(),
            Suite::ScalingInvariants
        );
        assert!("speed".parse::<Suite>().is_err());
    }

    #[test]
    fn property_verdicts() {
        assert!(Property::at_most("a", 1e-9, 1e-8).passed());
        assert!(!Property::at_most("a", f64::NAN, 1e-8).passed());
        assert!(Property::at_least("b", 60.0, 51.2).passed());
        assert!(!Property::at_least("b", 2.0, 51.2).passed());
        assert!(Property::at_most("c", 0.0, 0.0)
            .to_string()
            .starts_with("PASS c: "));
    }

    #[test]
    fn small_equivalence_run_passes() {
        for p in equivalence(3, 9).unwrap() {
            assert!(p.passed(), "{p}");
        }
    }

    #[test]
    fn identities_pass() {
        for p in identities(1).unwrap() {
            assert!(p.passed(), "{p}");
        }
    }
}
