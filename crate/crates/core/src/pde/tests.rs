use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::checks::{fd_derivative, FdConfig};
use crate::nets::{init_params, DeepONet, NetSpec, ParamSet};
use crate::sampling::{
    sample_coefficients, sample_grf, sample_grf_periodic, sample_points, FunctionSet, SampleMode,
};
use crate::strategies::{ProductMode, Strategy};
use crate::{Graph, Tensor};

fn mi(orders: &[usize]) -> MultiIndex {
    MultiIndex::new(orders.to_vec())
}

fn random_net(problem: &PdeProblem, seed: u64) -> DeepONet<f64> {
    let spec = NetSpec::uniform(
        problem.features,
        problem.dims(),
        8,
        2,
        4,
        problem.channels(),
    );
    let mut net = init_params(&spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.beta = Tensor::from_fn(net.beta.shape().clone(), |_| rng.gen_range(-0.5..0.5));
    net
}

fn zero_net(problem: &PdeProblem) -> DeepONet<f64> {
    let mut net = random_net(problem, 0);
    let zeros = ParamSet {
        tensors: net
            .params()
            .tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape().clone()))
            .collect(),
    };
    net.set_params(&zeros).unwrap();
    net
}

fn functions(problem: &PdeProblem, count: usize, seed: u64) -> FunctionSet<f64> {
    match problem.input {
        InputRole::SineCoefficients => {
            let side = problem.features_side().unwrap();
            sample_coefficients(side, side, count, seed)
        }
        _ if problem.kind == ProblemKind::Burgers => {
            sample_grf_periodic(problem.features, 0.2, 1.0, count, seed).unwrap()
        }
        _ => sample_grf(problem.features, 0.2, 1.0, count, seed).unwrap(),
    }
}

fn small_problem(kind: ProblemKind) -> PdeProblem {
    let options = ProblemOptions {
        sensors: 6,
        kirchhoff_modes: 2,
        ..Default::default()
    };
    make_problem(kind, &options).unwrap()
}

fn small_batch(problem: &PdeProblem, seed: u64) -> Batch<f64> {
    let funcs = functions(problem, 4, seed);
    let points = sample_points(problem, 7, 3, 4, SampleMode::UniformRandom, seed).unwrap();
    build_batch(problem, &funcs, &[0, 2, 3], &points).unwrap()
}

fn loss_parts(
    problem: &PdeProblem,
    net: &DeepONet<f64>,
    strategy: Strategy,
    batch: &Batch<f64>,
) -> Vec<(String, f64)> {
    let graph = Graph::new();
    let bound = net.bind(&graph).unwrap();
    let loss = physics_loss(problem, &bound, strategy, batch, ProductMode::PerTerm).unwrap();
    let mut out = loss.part_values();
    out.push(("total".into(), loss.value()));
    out
}

#[test]
fn burgers_request() {
    let p = make_problem(ProblemKind::Burgers, &Default::default()).unwrap();
    let linear: BTreeSet<MultiIndex> = p.request.linear.iter().map(|f| f.index.clone()).collect();
    assert!(linear.contains(&mi(&[0, 1])) && linear.contains(&mi(&[2, 0])));
    assert_eq!(p.request.products.len(), 1);
    assert_eq!(p.request.products[0].left.index, mi(&[0, 0]));
    assert_eq!(p.request.products[0].right.index, mi(&[1, 0]));
    assert_eq!(p.dim_names, ["x", "t"]);
    assert_eq!(p.constant("nu").unwrap(), 0.01);
}

#[test]
fn kirchhoff_request() {
    let p = make_problem(ProblemKind::Kirchhoff, &Default::default()).unwrap();
    let linear: Vec<MultiIndex> = p.request.linear.iter().map(|f| f.index.clone()).collect();
    assert_eq!(linear, [mi(&[4, 0]), mi(&[2, 2]), mi(&[0, 4])]);
    let coeffs: Vec<f64> = p.residuals[0].linear.iter().map(|t| t.coeff).collect();
    assert_eq!(coeffs, [1.0, 2.0, 1.0]);
    assert_eq!(p.order, 4);
}

#[test]
fn problem_orders_and_constants() {
    let orders: Vec<usize> = ProblemKind::ALL
        .iter()
        .map(|&k| make_problem(k, &Default::default()).unwrap().order)
        .collect();
    assert_eq!(orders, [2, 2, 2, 4, 2]);
    let rd = make_problem(ProblemKind::ReactionDiffusion, &Default::default()).unwrap();
    assert_eq!(
        (rd.constant("D").unwrap(), rd.constant("k").unwrap()),
        (0.01, 0.01)
    );
    let st = make_problem(ProblemKind::Stokes, &Default::default()).unwrap();
    assert_eq!(st.constant("mu").unwrap(), 0.01);
    assert!(st.constant("nu").is_err());
    for k in ProblemKind::ALL {
        assert_eq!(k.to_string().parse::<ProblemKind>().unwrap(), k);
    }
    assert!("heat".parse::<ProblemKind>().is_err());
}

#[test]
fn scaling_coefficients_are_binomial() {
    let p = make_problem(
        ProblemKind::Scaling,
        &ProblemOptions {
            scaling_order: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let got: Vec<(String, f64)> = p.residuals[0]
        .linear
        .iter()
        .map(|t| (t.field.index.to_string(), t.coeff))
        .collect();
    let want = [
        ("(0,0)", 1.0),
        ("(0,1)", 1.0),
        ("(1,0)", 1.0),
        ("(0,2)", 1.0),
        ("(1,1)", 2.0),
        ("(2,0)", 1.0),
        ("(0,3)", 1.0),
        ("(1,2)", 3.0),
        ("(2,1)", 3.0),
        ("(3,0)", 1.0),
    ];
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!((g.0.as_str(), g.1), w);
    }
}

#[test]
fn stokes_reads_exactly_the_needed_derivatives() {
    let p = make_problem(ProblemKind::Stokes, &Default::default()).unwrap();
    let per_channel = |c: usize| -> BTreeSet<String> {
        p.request
            .closure()
            .into_iter()
            .filter(|f| f.channel == c && !f.index.is_zero())
            .map(|f| f.index.to_string())
            .collect()
    };
    let velocity: BTreeSet<String> = ["(1,0)", "(0,1)", "(2,0)", "(0,2)"]
        .map(String::from)
        .into();
    let pressure: BTreeSet<String> = ["(1,0)", "(0,1)"].map(String::from).into();
    assert_eq!(per_channel(0), velocity);
    assert_eq!(per_channel(1), velocity);
    assert_eq!(per_channel(2), pressure);
    assert_eq!(p.channels(), 3);
}

#[test]
fn scaling_order_zero_is_the_output() {
    let p = make_problem(
        ProblemKind::Scaling,
        &ProblemOptions {
            scaling_order: 0,
            sensors: 6,
            ..Default::default()
        },
    )
    .unwrap();
    let net = random_net(&p, 3);
    let batch = small_batch(&p, 3);
    let u = net.eval(&batch.p, &batch.interior).unwrap();
    let want = u.data().iter().map(|v| v * v).sum::<f64>() / u.numel() as f64;
    for s in Strategy::ALL {
        let parts = loss_parts(&p, &net, s, &batch);
        assert!((parts[0].1 - want).abs() <= 1e-14 * want, "{s}");
    }
}

#[test]
fn zero_net_losses() {
    let rd = small_problem(ProblemKind::ReactionDiffusion);
    let batch = small_batch(&rd, 5);
    let f = batch.source.as_ref().unwrap();
    let want = f.data().iter().map(|v| v * v).sum::<f64>() / f.numel() as f64;
    let parts = loss_parts(&rd, &zero_net(&rd), Strategy::Zcs, &batch);
    assert_eq!(parts[0].0, "pde");
    assert!((parts[0].1 - want).abs() <= 1e-14 * want);
    assert!(parts[1..4].iter().all(|(_, v)| *v == 0.0));

    let sc = small_problem(ProblemKind::Scaling);
    let parts = loss_parts(&sc, &zero_net(&sc), Strategy::Zcs, &small_batch(&sc, 5));
    assert_eq!(parts.last().unwrap().1, 0.0);
}

#[test]
fn loss_agrees_across_strategies() {
    for kind in ProblemKind::ALL {
        let p = small_problem(kind);
        let net = random_net(&p, 11);
        let batch = small_batch(&p, 12);
        let reference = loss_parts(&p, &net, Strategy::FuncLoop, &batch);
        assert_eq!(
            reference[..reference.len() - 1]
                .iter()
                .map(|(n, _)| n.clone())
                .collect::<Vec<_>>(),
            p.part_names()
        );
        for s in [Strategy::DataVect, Strategy::Zcs] {
            let got = loss_parts(&p, &net, s, &batch);
            for ((name, a), (_, b)) in got.iter().zip(&reference) {
                assert!(
                    (a - b).abs() <= 1e-8 * b.abs().max(1e-300),
                    "{kind} {s} {name}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn second_order_products_give_the_same_loss() {
    let p = small_problem(ProblemKind::Burgers);
    let net = random_net(&p, 2);
    let batch = small_batch(&p, 2);
    let graph = Graph::new();
    let bound = net.bind(&graph).unwrap();
    let a = physics_loss(&p, &bound, Strategy::Zcs, &batch, ProductMode::SecondOrder).unwrap();
    let b = loss_parts(&p, &net, Strategy::Zcs, &batch);
    assert!((a.value() - b.last().unwrap().1).abs() <= 1e-10 * a.value());
}

#[test]
fn loss_is_invariant_to_point_order() {
    let p = small_problem(ProblemKind::Burgers);
    let net = random_net(&p, 4);
    let batch = small_batch(&p, 4);
    let n = batch.n();
    let perm: Vec<usize> = (0..n).rev().collect();
    let mut shuffled = batch.clone();
    shuffled.interior = Tensor::from_fn([n, 2], |k| batch.interior.data()[perm[k / 2] * 2 + k % 2]);
    let a = loss_parts(&p, &net, Strategy::Zcs, &batch)
        .last()
        .unwrap()
        .1;
    let b = loss_parts(&p, &net, Strategy::Zcs, &shuffled)
        .last()
        .unwrap()
        .1;
    assert!((a - b).abs() <= 1e-13 * a);
}

#[test]
fn missing_batch_fields() {
    let p = small_problem(ProblemKind::ReactionDiffusion);
    let net = random_net(&p, 1);
    let graph = Graph::new();
    let bound = net.bind(&graph).unwrap();
    let mut batch = small_batch(&p, 1);
    batch.source = None;
    assert!(matches!(
        physics_loss(&p, &bound, Strategy::Zcs, &batch, ProductMode::PerTerm),
        Err(crate::Error::MissingField(_))
    ));
    let mut batch = small_batch(&p, 1);
    batch.conditions.pop();
    assert!(matches!(
        physics_loss(&p, &bound, Strategy::Zcs, &batch, ProductMode::PerTerm),
        Err(crate::Error::MissingField(_))
    ));
}

#[test]
fn point_groups_follow_the_problem() {
    let p = small_problem(ProblemKind::Burgers);
    let pts = sample_points::<f64>(&p, 10, 5, 6, SampleMode::UniformRandom, 8).unwrap();
    let (left, right) = (pts.group("left").unwrap(), pts.group("right").unwrap());
    for (l, r) in left.data().chunks(2).zip(right.data().chunks(2)) {
        assert_eq!((l[0], r[0]), (0.0, 1.0));
        assert_eq!(l[1], r[1]);
    }
    assert_eq!(pts.group("initial").unwrap().dims(), &[6, 2]);
    let again = sample_points::<f64>(&p, 10, 5, 6, SampleMode::UniformRandom, 8).unwrap();
    assert_eq!(pts, again);

    let batch = build_batch(&p, &functions(&p, 3, 1), &[1], &pts).unwrap();
    let init = batch
        .conditions
        .iter()
        .find(|c| c.name == "initial")
        .unwrap();
    match &init.target {
        ConditionTarget::Values(v) => assert_eq!(v.dims(), &[1, 6]),
        _ => panic!("initial condition should carry values"),
    }
}

#[test]
fn kirchhoff_analytic_basics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_fn([20, 2], |_| rng.gen_range(0.0..1.0));
    let zero = Tensor::<f64>::zeros([2, 9]);
    assert_eq!(
        kirchhoff_analytic(&zero, &x, 3, 0.01).unwrap().max_abs(),
        0.0
    );

    let c = Tensor::from_fn([2, 9], |_| rng.gen_range(-1.0..1.0));
    let t: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut edges = Vec::new();
    for &s in &t {
        edges.extend_from_slice(&[s, 0.0, s, 1.0, 0.0, s, 1.0, s]);
    }
    let edges = Tensor::from_vec([40, 2], edges).unwrap();
    assert!(kirchhoff_analytic(&c, &edges, 3, 0.01).unwrap().max_abs() <= 1e-15);

    let c11 = Tensor::<f64>::from_vec([1, 1], vec![1.0]).unwrap();
    let centre = Tensor::from_vec([1, 2], vec![0.5, 0.5]).unwrap();
    let u: f64 = kirchhoff_analytic(&c11, &centre, 1, 0.01).unwrap().data()[0];
    assert!((u - 0.25665).abs() <= 5e-6, "{u}");
}

#[test]
fn kirchhoff_analytic_solves_the_plate_equation_by_finite_differences() {
    let c11 = Tensor::<f64>::from_vec([1, 1], vec![1.0]).unwrap();
    let centre = Tensor::from_vec([1, 2], vec![0.5, 0.5]).unwrap();
    let eval = |x: &Tensor<f64>| kirchhoff_analytic(&c11, x, 1, 0.01);
    let cfg = FdConfig::default();
    let biharmonic = [(mi(&[4, 0]), 1.0), (mi(&[2, 2]), 2.0), (mi(&[0, 4]), 1.0)]
        .iter()
        .map(|(m, w)| fd_derivative(&eval, &centre, m, cfg).unwrap().data()[0] * w)
        .sum::<f64>();
    let load = kirchhoff_load(&c11, &centre, 1).unwrap().data()[0] / 0.01;
    assert!((biharmonic - load).abs() <= 1e-4, "{biharmonic} vs {load}");
}

#[test]
fn kirchhoff_analytic_operator_has_zero_residual() {
    let p = make_problem(ProblemKind::Kirchhoff, &Default::default()).unwrap();
    let funcs = functions(&p, 3, 9);
    let pts = sample_points::<f64>(&p, 25, 4, 0, SampleMode::UniformRandom, 9).unwrap();
    let batch = build_batch(&p, &funcs, &[0, 1, 2], &pts).unwrap();
    for s in Strategy::ALL {
        let graph = Graph::new();
        let op = KirchhoffAnalytic::new(&graph, 3, 0.01);
        let derivs =
            crate::strategies::Derivatives::compute(s, &op, &batch.p, &batch.interior, &p.request)
                .unwrap();
        let lhs = derivs.combination(&p.residuals[0].linear).unwrap().value();
        let res = lhs.sub(batch.source.as_ref().unwrap()).unwrap();
        assert!(res.max_abs() <= 1e-8, "{s}: {}", res.max_abs());
        let u = derivs.output(0).unwrap().value();
        let want = kirchhoff_analytic(&batch.p, &batch.interior, 3, 0.01).unwrap();
        assert!(u.sub(&want).unwrap().max_abs() <= 1e-14);
    }
}
