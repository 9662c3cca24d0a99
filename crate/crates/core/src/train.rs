//! Physics-only training with Adam, per-stage timing and validation.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, GraphStats};
use crate::error::{Error, Result};
use crate::nets::{init_params, Activation, DeepONet, NetSpec, ParamSet};
use crate::pde::{
    build_batch, kirchhoff_analytic, make_problem, physics_loss, Batch, InputRole, PdeProblem,
    ProblemKind, ProblemOptions,
};
use crate::reference::{solve_burgers, solve_reaction_diffusion};
use crate::sampling::{
    linspace, sample_coefficients, sample_grf, sample_grf_periodic, sample_points, FunctionSet,
    PointSet, SampleMode,
};
use crate::scalar::Scalar;
use crate::strategies::{ProductMode, Strategy};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape().clone()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.tensors.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::dim("adam", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::one() - T::lit(cfg.beta1.powi(t));
    let c2 = T::one() - T::lit(cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for ((p, g), (m, v)) in params
        .tensors
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for k in 0..pd.len() {
            md[k] = b1 * md[k] + (T::one() - b1) * gd[k];
            vd[k] = b2 * vd[k] + (T::one() - b2) * gd[k] * gd[k];
            let mh = md[k] / c1;
            let vh = vd[k] / c2;
            pd[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// `‖pred − reference‖₂ / ‖reference‖₂`.
pub fn relative_l2<T: Scalar>(pred: &Tensor<T>, reference: &Tensor<T>) -> Result<f64> {
    if pred.shape() != reference.shape() {
        return Err(Error::dim("relative_l2", pred.shape(), reference.shape()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in pred.data().iter().zip(reference.data()) {
        let (a, b) = (a.as_f64(), b.as_f64());
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Wall time of the phases of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub inputs: Duration,
    pub forward: Duration,
    pub pde: Duration,
    pub backprop: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.inputs + self.forward + self.pde + self.backprop
    }
}

/// Loss, parts and `∂loss/∂θ` of one batch.
#[derive(Debug, Clone)]
pub struct Step<T> {
    pub loss: T,
    pub parts: Vec<(String, T)>,
    pub grads: Vec<Tensor<T>>,
    pub times: StageTimes,
    /// Graph size once the loss is recorded; the parameter gradient is
    /// evaluated eagerly and adds no nodes.
    pub stats: GraphStats,
}

/// Records the physics loss on a fresh graph and backpropagates it to θ.
pub fn loss_and_grad<T: Scalar>(
    problem: &PdeProblem,
    net: &DeepONet<T>,
    strategy: Strategy,
    mode: ProductMode,
    batch: &Batch<T>,
    ceiling: Option<usize>,
) -> Result<Step<T>> {
    let graph = match ceiling {
        Some(c) => Graph::with_ceiling(c),
        None => Graph::new(),
    };
    let start = Instant::now();
    let bound = net.bind(&graph)?;
    let setup = start.elapsed();
    let loss = physics_loss(problem, &bound, strategy, batch, mode)?;
    let stats = graph.stats();
    let back = Instant::now();
    let grads = graph.vjp_tensors(loss.total, &Tensor::scalar(T::one()), bound.params())?;
    let backprop = back.elapsed();
    Ok(Step {
        loss: loss.value(),
        parts: loss.part_values(),
        grads,
        times: StageTimes {
            inputs: setup,
            forward: loss.forward,
            pde: loss.pde,
            backprop,
        },
        stats,
    })
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub problem: ProblemKind,
    pub options: ProblemOptions,
    pub strategy: Strategy,
    pub product_mode: ProductMode,
    /// Functions per batch.
    pub m: usize,
    /// Residual points.
    pub n: usize,
    /// Points per boundary group.
    pub n_boundary: usize,
    /// Points on the initial line.
    pub n_initial: usize,
    pub batches: usize,
    pub lr: f64,
    pub seed: u64,
    /// Size of the training function pool.
    pub num_funcs: usize,
    /// Held-out functions used for validation.
    pub num_val_funcs: usize,
    /// Validate every this many batches, and after the last; 0 disables.
    pub validate_every: usize,
    /// Keep every this many batches in the report, plus the last.
    pub record_every: usize,
    pub sample_mode: SampleMode,
    /// Draw new points every batch instead of reusing one set.
    pub resample_points: bool,
    pub length_scale: f64,
    pub width: usize,
    pub depth: usize,
    pub latent: usize,
    pub activation: Activation,
    /// Retained-bytes ceiling for each batch graph.
    pub ceiling: Option<usize>,
}

impl TrainConfig {
    pub fn new(problem: ProblemKind) -> Self {
        TrainConfig {
            problem,
            options: ProblemOptions::default(),
            strategy: Strategy::Zcs,
            product_mode: ProductMode::PerTerm,
            m: 16,
            n: 256,
            n_boundary: 32,
            n_initial: 32,
            batches: 1000,
            lr: 1e-3,
            seed: 0,
            num_funcs: 1000,
            num_val_funcs: 10,
            validate_every: 0,
            record_every: 1,
            sample_mode: SampleMode::UniformRandom,
            resample_points: false,
            length_scale: 0.2,
            width: 64,
            depth: 2,
            latent: 64,
            activation: Activation::Tanh,
            ceiling: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("n", self.n),
            ("num_funcs", self.num_funcs),
            ("width", self.width),
            ("latent", self.latent),
            ("record_every", self.record_every),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be positive")));
        }
        if self.m > self.num_funcs {
            return Err(Error::Config(format!(
                "batch of {} functions exceeds the pool of {}",
                self.m, self.num_funcs
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.length_scale > 0.0) {
            return Err(Error::Config("length scale must be positive".into()));
        }
        Ok(())
    }

    pub fn net_spec(&self, problem: &PdeProblem) -> NetSpec {
        let mut spec = NetSpec::uniform(
            problem.features,
            problem.dims(),
            self.width,
            self.depth,
            self.latent,
            problem.channels(),
        );
        spec.activation = self.activation;
        spec
    }
}

/// Input functions for `problem`.
pub fn sample_functions<T: Scalar>(
    problem: &PdeProblem,
    count: usize,
    length_scale: f64,
    seed: u64,
) -> Result<FunctionSet<T>> {
    match problem.input {
        InputRole::SineCoefficients => {
            let side = problem.features_side()?;
            Ok(sample_coefficients(side, side, count, seed))
        }
        _ if problem.kind == ProblemKind::Burgers => {
            sample_grf_periodic(problem.features, length_scale, 1.0, count, seed)
        }
        _ => sample_grf(problem.features, length_scale, 1.0, count, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub batch: usize,
    pub loss: f64,
    pub parts: Vec<f64>,
    pub times: StageTimes,
    pub nodes: usize,
    pub retained_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub problem: ProblemKind,
    pub strategy: Strategy,
    pub part_names: Vec<String>,
    pub records: Vec<BatchRecord>,
    /// `(batch, relative L2 error)` on held-out functions.
    pub validation: Vec<(usize, f64)>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.validation.last().map(|v| v.1)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["batch".to_string(), "loss".to_string()];
        h.extend(self.part_names.iter().cloned());
        h.extend(
            [
                "time_inputs_ms",
                "time_forward_ms",
                "time_pde_ms",
                "time_backprop_ms",
                "nodes",
                "retained_bytes",
            ]
            .map(String::from),
        );
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        let ms = |d: Duration| format!("{:.6}", d.as_secs_f64() * 1e3);
        for r in &self.records {
            let mut row = vec![r.batch.to_string(), format!("{:e}", r.loss)];
            row.extend(r.parts.iter().map(|v| format!("{v:e}")));
            row.extend([
                ms(r.times.inputs),
                ms(r.times.forward),
                ms(r.times.pde),
                ms(r.times.backprop),
                r.nodes.to_string(),
                r.retained_bytes.to_string(),
            ]);
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mean = |f: fn(&StageTimes) -> Duration| {
            let n = self.records.len().max(1) as f64;
            self.records
                .iter()
                .map(|r| f(&r.times).as_secs_f64())
                .sum::<f64>()
                * 1e3
                / n
        };
        let mut s = format!(
            "{} {}: {} records, final loss {:.6e}, mean ms inputs {:.3} forward {:.3} pde {:.3} backprop {:.3}",
            self.problem,
            self.strategy,
            self.records.len(),
            self.final_loss().unwrap_or(f64::NAN),
            mean(|t| t.inputs),
            mean(|t| t.forward),
            mean(|t| t.pde),
            mean(|t| t.backprop),
        );
        if let Some(e) = self.final_error() {
            s.push_str(&format!(", relative L2 {e:.4}"));
        }
        s
    }
}

/// Held-out functions with reference solutions on a grid.
pub struct Validator<T> {
    functions: FunctionSet<T>,
    /// `K×D` evaluation points shared by every function.
    points: Tensor<T>,
    /// `num_funcs × K` reference values.
    reference: Tensor<T>,
}

impl<T: Scalar> Validator<T> {
    /// Builds reference solutions, or `None` when the problem has no
    /// in-repo oracle.
    pub fn new(problem: &PdeProblem, functions: FunctionSet<T>) -> Result<Option<Self>> {
        let count = functions.len();
        let all: Vec<usize> = (0..count).collect();
        let (points, reference) = match problem.kind {
            ProblemKind::ReactionDiffusion => {
                let (nx, nt, stride) = (256, 255, 5);
                let xs: Vec<T> = linspace(nx);
                let f = functions.interpolate(&all, &xs);
                let (d, k) = (problem.constant("D")?, problem.constant("k")?);
                let mut pts = Vec::new();
                let mut vals = Vec::new();
                for i in 0..count {
                    let row: Vec<f64> = f.data()[i * nx..(i + 1) * nx]
                        .iter()
                        .map(|v| v.as_f64())
                        .collect();
                    let sol = solve_reaction_diffusion(&row, nt, d, k)?;
                    let (p, v) = sol.sample(stride);
                    if i == 0 {
                        pts = p;
                    }
                    vals.extend(v);
                }
                (pts, vals)
            }
            ProblemKind::Burgers => {
                let (nx, nt, substeps, stride) = (256, 100, 40, 4);
                let xs: Vec<T> = (0..nx).map(|i| T::lit(i as f64 / nx as f64)).collect();
                let u0 = functions.interpolate(&all, &xs);
                let nu = problem.constant("nu")?;
                let mut pts = Vec::new();
                let mut vals = Vec::new();
                for i in 0..count {
                    let row: Vec<f64> = u0.data()[i * nx..(i + 1) * nx]
                        .iter()
                        .map(|v| v.as_f64())
                        .collect();
                    let sol = solve_burgers(&row, nt, substeps, nu)?;
                    let (p, v) = sol.sample(stride);
                    if i == 0 {
                        pts = p;
                    }
                    vals.extend(v);
                }
                (pts, vals)
            }
            ProblemKind::Kirchhoff => {
                let g = 33;
                let pts: Vec<[f64; 2]> = (0..g * g)
                    .map(|k| {
                        [
                            (k / g) as f64 / (g - 1) as f64,
                            (k % g) as f64 / (g - 1) as f64,
                        ]
                    })
                    .collect();
                let x = Tensor::from_fn([g * g, 2], |k| T::lit(pts[k / 2][k % 2]));
                let u = kirchhoff_analytic(
                    &functions.values,
                    &x,
                    problem.features_side()?,
                    problem.constant("D")?,
                )?;
                (pts, u.data().iter().map(|v| v.as_f64()).collect())
            }
            ProblemKind::Scaling | ProblemKind::Stokes => return Ok(None),
        };
        let k = points.len();
        Ok(Some(Validator {
            functions,
            points: Tensor::from_fn([k, 2], |i| T::lit(points[i / 2][i % 2])),
            reference: Tensor::from_vec([count, k], reference.into_iter().map(T::lit).collect())?,
        }))
    }

    pub fn points(&self) -> &Tensor<T> {
        &self.points
    }

    /// Relative L2 error over every held-out function and point.
    pub fn error(&self, net: &DeepONet<T>) -> Result<f64> {
        let (count, k) = (self.functions.len(), self.points.dims()[0]);
        let c = net.spec.channels;
        let u = net.eval(&self.functions.values, &self.points)?;
        let pred = Tensor::from_fn([count, k], |j| u.data()[j * c]);
        relative_l2(&pred, &self.reference)
    }
}

pub struct TrainOutcome<T> {
    pub net: DeepONet<T>,
    pub report: TrainReport,
}

const VALIDATION_SEED: u64 = 0x5eed_0f_da7a;

fn check_finite<T: Scalar>(step: &Step<T>, batch: usize) -> Result<()> {
    if step.loss.is_finite() {
        return Ok(());
    }
    let term = step
        .parts
        .iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n.clone())
        .unwrap_or_else(|| "total".into());
    Err(Error::NonFiniteLoss { term, batch })
}

/// Trains a fresh network.
pub fn train<T: Scalar>(config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let problem = make_problem(config.problem, &config.options)?;
    let net = init_params(&config.net_spec(&problem), config.seed)?;
    train_from(config, &problem, net)
}

/// Trains `net` from its current parameters.
pub fn train_from<T: Scalar>(
    config: &TrainConfig,
    problem: &PdeProblem,
    mut net: DeepONet<T>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let functions =
        sample_functions::<T>(problem, config.num_funcs, config.length_scale, config.seed)?;
    let validator = if config.validate_every > 0 && config.num_val_funcs > 0 {
        let held_out = sample_functions::<T>(
            problem,
            config.num_val_funcs,
            config.length_scale,
            config.seed ^ VALIDATION_SEED,
        )?;
        Validator::new(problem, held_out)?
    } else {
        None
    };
    let draw_points = |round: u64| -> Result<PointSet<T>> {
        sample_points(
            problem,
            config.n,
            config.n_boundary,
            config.n_initial,
            config.sample_mode,
            config.seed.wrapping_add(round),
        )
    };
    let mut points = draw_points(0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut params = net.params();
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut report = TrainReport {
        problem: problem.kind,
        strategy: config.strategy,
        part_names: problem.part_names(),
        records: Vec::new(),
        validation: Vec::new(),
    };

    for b in 0..=config.batches {
        let start = Instant::now();
        if config.resample_points && b > 0 {
            points = draw_points(b as u64)?;
        }
        let idx = sample(&mut rng, config.num_funcs, config.m).into_vec();
        let batch = build_batch(problem, &functions, &idx, &points)?;
        let inputs = start.elapsed();

        let mut step = loss_and_grad(
            problem,
            &net,
            config.strategy,
            config.product_mode,
            &batch,
            config.ceiling,
        )?;
        step.times.inputs += inputs;
        check_finite(&step, b)?;
        if let Some(v) = &validator {
            if b % config.validate_every == 0 || b == config.batches {
                report.validation.push((b, v.error(&net)?));
            }
        }
        // the last pass only measures the final parameters
        if b < config.batches {
            let t = Instant::now();
            adam_step(&mut params, &step.grads, &mut adam, &adam_cfg)?;
            net.set_params(&params)?;
            step.times.backprop += t.elapsed();
        }
        if b % config.record_every == 0 || b == config.batches {
            report.records.push(BatchRecord {
                batch: b,
                loss: step.loss.as_f64(),
                parts: step.parts.iter().map(|(_, v)| v.as_f64()).collect(),
                times: step.times,
                nodes: step.stats.node_count,
                retained_bytes: step.stats.retained_bytes,
            });
        }
    }
    Ok(TrainOutcome { net, report })
}

#[cfg(test)]
mod tests;
