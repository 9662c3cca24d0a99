use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::{kirchhoff_load, BoundaryValue, ConditionSpec, InputRole, PdeProblem};
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::sampling::{FunctionSet, PointSet};
use crate::scalar::Scalar;
use crate::strategies::{Derivatives, Operator, ProductMode, Strategy};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionTarget<T> {
    /// `M×K` values the channel must take.
    Values(Tensor<T>),
    /// `K×D` points whose prediction the channel must match.
    Partner(Tensor<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBatch<T> {
    pub name: String,
    pub channel: usize,
    pub weight: f64,
    /// `K×D`.
    pub points: Tensor<T>,
    pub target: ConditionTarget<T>,
}

/// Everything one loss evaluation reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `M×Q` branch inputs.
    pub p: Tensor<T>,
    /// `N×D` residual points.
    pub interior: Tensor<T>,
    /// `M×N` source term at the residual points.
    pub source: Option<Tensor<T>>,
    pub conditions: Vec<ConditionBatch<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn m(&self) -> usize {
        self.p.dims()[0]
    }

    pub fn n(&self) -> usize {
        self.interior.dims()[0]
    }
}

fn free_coordinate<T: Scalar>(points: &Tensor<T>, pinned: usize) -> Vec<T> {
    let d = points.dims()[1];
    let free = if pinned == 0 { 1 } else { 0 };
    points.data().chunks(d).map(|row| row[free]).collect()
}

/// Assembles a batch for functions `idx` of `functions` on `points`.
pub fn build_batch<T: Scalar>(
    problem: &PdeProblem,
    functions: &FunctionSet<T>,
    idx: &[usize],
    points: &PointSet<T>,
) -> Result<Batch<T>> {
    if functions.features() != problem.features {
        return Err(Error::Config(format!(
            "{} expects {} input features, functions have {}",
            problem.kind,
            problem.features,
            functions.features()
        )));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= functions.len()) {
        return Err(Error::Config(format!(
            "function index {bad} out of range for {} functions",
            functions.len()
        )));
    }
    let p = functions.rows(idx);
    let interior = points.interior.clone();
    let source = if problem.residuals.iter().any(|r| r.uses_source) {
        Some(match problem.input {
            InputRole::Source => functions.interpolate(idx, &free_coordinate(&interior, 1)),
            InputRole::SineCoefficients => {
                let d = T::lit(problem.constant("D")?);
                kirchhoff_load(&p, &interior, problem.features_side()?)?.map(|q| q / d)
            }
            _ => {
                return Err(Error::Config(format!(
                    "{} has no source input",
                    problem.kind
                )))
            }
        })
    } else {
        None
    };
    let mut conditions = Vec::with_capacity(problem.conditions.len());
    for spec in &problem.conditions {
        let (group, channel) = match spec {
            ConditionSpec::Dirichlet { group, channel, .. }
            | ConditionSpec::Periodic { group, channel, .. } => (*group, *channel),
        };
        let pts = points
            .group(group)
            .ok_or_else(|| Error::MissingField(format!("point group `{group}`")))?
            .clone();
        let edge = &problem
            .group(group)
            .ok_or_else(|| Error::MissingField(format!("point group `{group}`")))?
            .edge;
        let target = match spec {
            ConditionSpec::Dirichlet { value, .. } => ConditionTarget::Values(match value {
                BoundaryValue::Zero => Tensor::zeros([idx.len(), pts.dims()[0]]),
                BoundaryValue::Input => {
                    functions.interpolate(idx, &free_coordinate(&pts, edge.axis))
                }
            }),
            ConditionSpec::Periodic { partner, .. } => ConditionTarget::Partner(
                points
                    .group(partner)
                    .ok_or_else(|| Error::MissingField(format!("point group `{partner}`")))?
                    .clone(),
            ),
        };
        conditions.push(ConditionBatch {
            name: spec.name().to_string(),
            channel,
            weight: spec.weight(),
            points: pts,
            target,
        });
    }
    Ok(Batch {
        p,
        interior,
        source,
        conditions,
    })
}

/// A recorded physics loss and its parts.
pub struct PhysicsLoss<'g, T> {
    pub total: Var<'g, T>,
    /// Weighted contribution of every residual and condition, in
    /// [`PdeProblem::part_names`] order.
    pub parts: Vec<(String, Var<'g, T>)>,
    /// Network evaluations: the residual forward pass and the plain
    /// boundary passes.
    pub forward: Duration,
    /// Coordinate derivatives and residual assembly.
    pub pde: Duration,
}

impl<T: Scalar> PhysicsLoss<'_, T> {
    pub fn value(&self) -> T {
        self.total.item().expect("scalar loss")
    }

    pub fn part_values(&self) -> Vec<(String, T)> {
        self.parts
            .iter()
            .map(|(n, v)| (n.clone(), v.item().expect("scalar part")))
            .collect()
    }
}

/// `Σ mean(residual²) + Σ w·mean(violation²)`, with residual derivatives
/// from `strategy` and plain forward passes on boundary points.
pub fn physics_loss<'g, T: Scalar>(
    problem: &PdeProblem,
    net: &dyn Operator<'g, T>,
    strategy: Strategy,
    batch: &Batch<T>,
    mode: ProductMode,
) -> Result<PhysicsLoss<'g, T>> {
    let graph = net.graph();
    let start = Instant::now();
    let derivs = Derivatives::compute(strategy, net, &batch.p, &batch.interior, &problem.request)?;
    let mut forward = derivs.forward_time();
    let mut parts = Vec::with_capacity(problem.residuals.len() + problem.conditions.len());
    for r in &problem.residuals {
        let mut res = derivs.combination(&r.linear)?;
        for (term, coeff) in &r.products {
            res = res.add(derivs.product(term, mode)?.scale(*coeff)?)?;
        }
        if r.uses_source {
            let s = batch
                .source
                .as_ref()
                .ok_or_else(|| Error::MissingField("source".into()))?;
            if s.dims() != [batch.m(), batch.n()] {
                return Err(Error::dim(
                    "source",
                    s.shape(),
                    &[batch.m(), batch.n()].into(),
                ));
            }
            res = res.sub(graph.constant(s.clone())?)?;
        }
        parts.push((r.name.clone(), res.square()?.mean_all()?));
    }
    let pde = start.elapsed().saturating_sub(forward);

    if !problem.conditions.is_empty() {
        let bc_start = Instant::now();
        let pv = graph.constant(batch.p.clone())?;
        let mut outputs: HashMap<Vec<u64>, Vec<Var<'g, T>>> = HashMap::new();
        let mut eval = |pts: &Tensor<T>| -> Result<Vec<Var<'g, T>>> {
            let key: Vec<u64> = pts.data().iter().map(|v| v.as_f64().to_bits()).collect();
            if let Some(u) = outputs.get(&key) {
                return Ok(u.clone());
            }
            let u = net.forward_channels(pv, graph.constant(pts.clone())?)?;
            outputs.insert(key, u.clone());
            Ok(u)
        };
        for spec in &problem.conditions {
            let c = batch
                .conditions
                .iter()
                .find(|c| c.name == spec.name())
                .ok_or_else(|| Error::MissingField(format!("condition `{}`", spec.name())))?;
            let u = eval(&c.points)?[c.channel];
            let violation = match &c.target {
                ConditionTarget::Values(v) => u.sub(graph.constant(v.clone())?)?,
                ConditionTarget::Partner(q) => u.sub(eval(q)?[c.channel])?,
            };
            parts.push((
                c.name.clone(),
                violation.square()?.mean_all()?.scale(c.weight)?,
            ));
        }
        forward += bc_start.elapsed();
    }

    let mut total = parts[0].1;
    for (_, v) in &parts[1..] {
        total = total.add(*v)?;
    }
    Ok(PhysicsLoss {
        total,
        parts,
        forward,
        pde,
    })
}
