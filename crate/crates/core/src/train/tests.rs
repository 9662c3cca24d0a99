use super::*;
use crate::nets::ParamSet;

fn params(values: &[f64]) -> ParamSet<f64> {
    ParamSet {
        tensors: vec![Tensor::from_vec([values.len()], values.to_vec()).unwrap()],
    }
}

fn tiny(problem: ProblemKind, strategy: Strategy, batches: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(problem);
    cfg.options.sensors = 6;
    cfg.options.kirchhoff_modes = 2;
    cfg.strategy = strategy;
    cfg.m = 3;
    cfg.n = 12;
    cfg.n_boundary = 4;
    cfg.n_initial = 4;
    cfg.num_funcs = 10;
    cfg.batches = batches;
    cfg.width = 6;
    cfg.latent = 4;
    cfg.seed = 7;
    cfg
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = params(&[1.0, -2.0]);
    let mut st = AdamState::new(&p);
    adam_step(
        &mut p,
        &[Tensor::zeros([2])],
        &mut st,
        &AdamConfig::default(),
    )
    .unwrap();
    assert_eq!(p.tensors[0].data(), &[1.0, -2.0]);
    assert_eq!(st.step, 1);
}

#[test]
fn adam_first_step_matches_formula() {
    let mut p = params(&[0.3]);
    let mut st = AdamState::new(&p);
    adam_step(
        &mut p,
        &[Tensor::full([1], 0.5)],
        &mut st,
        &AdamConfig::default(),
    )
    .unwrap();
    // m̂ = g, v̂ = g², Δ = −lr·g/(|g| + ε)
    let want = 0.3 - 1e-3 * 0.5 / (0.5 + 1e-8);
    assert!((p.tensors[0].data()[0] - want).abs() <= 1e-15);
}

#[test]
fn adam_opposite_steps_return_close() {
    let mut p = params(&[0.3, -1.0, 4.0]);
    let mut st = AdamState::new(&p);
    let cfg = AdamConfig::default();
    let g = Tensor::from_vec([3], vec![0.5, -2.0, 1e-3]).unwrap();
    adam_step(&mut p, &[g.clone()], &mut st, &cfg).unwrap();
    adam_step(&mut p, &[g.scale(-1.0)], &mut st, &cfg).unwrap();
    for (a, b) in p.tensors[0].data().iter().zip([0.3, -1.0, 4.0]) {
        assert!((a - b).abs() <= 2.0 * cfg.lr);
    }
    assert!(adam_step(&mut p, &[Tensor::zeros([2])], &mut st, &cfg).is_err());
}

#[test]
fn relative_l2_examples() {
    let r = Tensor::from_vec([3], vec![1.0, -2.0, 0.5]).unwrap();
    assert_eq!(relative_l2(&r, &r).unwrap(), 0.0);
    assert!((relative_l2(&r.scale(1.1), &r).unwrap() - 0.1).abs() <= 1e-12);
    assert_eq!(relative_l2(&Tensor::zeros([3]), &r).unwrap(), 1.0);
    assert!(matches!(
        relative_l2(&r, &Tensor::zeros([3])),
        Err(Error::ZeroReference)
    ));
}

#[test]
fn zero_batches_report_initial_loss() {
    let out = train::<f64>(&tiny(ProblemKind::ReactionDiffusion, Strategy::Zcs, 0)).unwrap();
    assert_eq!(out.report.records.len(), 1);
    assert_eq!(out.report.records[0].batch, 0);
    assert!(out.report.records[0].loss > 0.0);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = tiny(ProblemKind::ReactionDiffusion, Strategy::Zcs, 30);
    let a = train::<f64>(&cfg).unwrap().report;
    let b = train::<f64>(&cfg).unwrap().report;
    let bits = |r: &TrainReport| r.losses().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.records.len(), 31);
    let first = a.records[0].loss;
    assert!(a.final_loss().unwrap() < first);
}

#[test]
fn strategies_give_the_same_loss_curve() {
    for kind in [
        ProblemKind::Burgers,
        ProblemKind::Kirchhoff,
        ProblemKind::Stokes,
    ] {
        let reference = train::<f64>(&tiny(kind, Strategy::FuncLoop, 5))
            .unwrap()
            .report
            .losses();
        for s in [Strategy::DataVect, Strategy::Zcs] {
            let got = train::<f64>(&tiny(kind, s, 5)).unwrap().report.losses();
            for (a, b) in got.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-6 * b.abs(), "{kind} {s}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    for kind in [ProblemKind::Burgers, ProblemKind::Kirchhoff] {
        let cfg = tiny(kind, Strategy::Zcs, 0);
        let problem = make_problem(kind, &cfg.options).unwrap();
        let net = init_params::<f64>(&cfg.net_spec(&problem), 3).unwrap();
        let funcs = sample_functions::<f64>(&problem, 4, 0.2, 1).unwrap();
        let pts = sample_points(&problem, 10, 3, 3, SampleMode::UniformRandom, 2).unwrap();
        let batch = build_batch(&problem, &funcs, &[0, 1, 3], &pts).unwrap();
        let step = loss_and_grad(
            &problem,
            &net,
            Strategy::Zcs,
            ProductMode::PerTerm,
            &batch,
            None,
        )
        .unwrap();
        let base = net.params();
        let h = 1e-5;
        for (ti, t) in base.tensors.iter().enumerate() {
            for k in (0..t.numel()).step_by(3) {
                let eval = |delta: f64| {
                    let mut p = base.clone();
                    p.tensors[ti].data_mut()[k] += delta;
                    let mut n = net.clone();
                    n.set_params(&p).unwrap();
                    loss_and_grad(
                        &problem,
                        &n,
                        Strategy::Zcs,
                        ProductMode::PerTerm,
                        &batch,
                        None,
                    )
                    .unwrap()
                    .loss
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let ad = step.grads[ti].data()[k];
                let scale = fd.abs().max(ad.abs()).max(1e-3 * step.loss);
                assert!(
                    (fd - ad).abs() <= 1e-4 * scale,
                    "{kind} tensor {ti}[{k}]: {ad} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn report_csv_is_strict_and_complete() {
    let out = train::<f64>(&tiny(ProblemKind::Stokes, Strategy::Zcs, 2)).unwrap();
    let mut buf = Vec::new();
    out.report.write_csv(&mut buf).unwrap();
    let mut rd = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(buf.as_slice());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..3], ["batch", "loss", "pde_u"]);
    assert_eq!(header.last().unwrap(), "retained_bytes");
    assert_eq!(header.len(), 2 + out.report.part_names.len() + 6);
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let loss: f64 = rows[0][1].parse().unwrap();
    assert_eq!(loss, out.report.records[0].loss);
    assert!(out.report.summary().contains("stokes zcs"));
}

#[test]
fn non_finite_loss_aborts() {
    let cfg = tiny(ProblemKind::ReactionDiffusion, Strategy::Zcs, 3);
    let problem = make_problem(cfg.problem, &cfg.options).unwrap();
    let mut net = init_params::<f64>(&cfg.net_spec(&problem), 0).unwrap();
    net.beta = Tensor::full([1], f64::NAN);
    match train_from(&cfg, &problem, net) {
        Err(Error::NonFiniteLoss { term, batch }) => {
            assert_eq!(batch, 0);
            assert_eq!(term, "pde");
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("expected an abort"),
    }
}

#[test]
fn config_validation() {
    let mut cfg = tiny(ProblemKind::Burgers, Strategy::Zcs, 1);
    cfg.m = 11;
    assert!(cfg.validate().is_err());
    cfg.m = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = tiny(ProblemKind::Burgers, Strategy::Zcs, 1);
    cfg.lr = 0.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn validator_scores_a_zero_network_as_one() {
    for kind in [
        ProblemKind::ReactionDiffusion,
        ProblemKind::Burgers,
        ProblemKind::Kirchhoff,
    ] {
        let cfg = tiny(kind, Strategy::Zcs, 0);
        let problem = make_problem(kind, &cfg.options).unwrap();
        let mut net = init_params::<f64>(&cfg.net_spec(&problem), 0).unwrap();
        let zeros = ParamSet {
            tensors: net
                .params()
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape().clone()))
                .collect(),
        };
        net.set_params(&zeros).unwrap();
        let funcs = sample_functions::<f64>(&problem, 2, 0.2, 5).unwrap();
        let v = Validator::new(&problem, funcs).unwrap().unwrap();
        assert!((v.error(&net).unwrap() - 1.0).abs() <= 1e-12, "{kind}");
    }
    let stokes = make_problem(ProblemKind::Stokes, &Default::default()).unwrap();
    let funcs = sample_functions::<f64>(&stokes, 2, 0.2, 5).unwrap();
    assert!(Validator::new(&stokes, funcs).unwrap().is_none());
}
