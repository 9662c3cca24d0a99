//! Residuals, boundary conditions and batches for the benchmark problems.

mod kirchhoff;
mod loss;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampling::Edge;
use crate::strategies::{DerivativeRequest, Field, LinearTerm, MultiIndex, ProductTerm};

pub use kirchhoff::{kirchhoff_analytic, kirchhoff_load, KirchhoffAnalytic};
pub use loss::{build_batch, physics_loss, Batch, ConditionBatch, ConditionTarget, PhysicsLoss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    /// `Σ_{k≤P} (∂x + ∂y)^k u = 0`, the high-order scaling operator.
    Scaling,
    ReactionDiffusion,
    Burgers,
    Kirchhoff,
    Stokes,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Scaling,
        ProblemKind::ReactionDiffusion,
        ProblemKind::Burgers,
        ProblemKind::Kirchhoff,
        ProblemKind::Stokes,
    ];
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Scaling => "scaling",
            ProblemKind::ReactionDiffusion => "reaction_diffusion",
            ProblemKind::Burgers => "burgers",
            ProblemKind::Kirchhoff => "kirchhoff",
            ProblemKind::Stokes => "stokes",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "scaling" => Ok(ProblemKind::Scaling),
            "reaction_diffusion" | "rd" => Ok(ProblemKind::ReactionDiffusion),
            "burgers" => Ok(ProblemKind::Burgers),
            "kirchhoff" | "kirchhoff_love" => Ok(ProblemKind::Kirchhoff),
            "stokes" => Ok(ProblemKind::Stokes),
            _ => Err(Error::Config(format!("unknown problem `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemOptions {
    /// Highest derivative order of the scaling operator.
    pub scaling_order: usize,
    /// Number of sine modes per axis of the Kirchhoff load.
    pub kirchhoff_modes: usize,
    /// Sensors per input function for the GP-driven problems.
    pub sensors: usize,
    /// Weight of every boundary or initial term unless overridden.
    pub bc_weight: f64,
    /// Per-condition weight overrides, keyed by part name.
    pub bc_weights: BTreeMap<String, f64>,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            scaling_order: 2,
            kirchhoff_modes: 3,
            sensors: 50,
            bc_weight: 1.0,
            bc_weights: BTreeMap::new(),
        }
    }
}

/// Where an input function enters the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputRole {
    /// Branch input only, no physical meaning (scaling operator).
    Unused,
    /// Source term `f(x)` sampled on the first coordinate.
    Source,
    /// Boundary or initial data sampled on the free coordinate of an edge.
    BoundaryData,
    /// Coefficients `c_rs` of a double sine series.
    SineCoefficients,
}

/// A residual `Σ coeff·∂^α u + Σ coeff·(∂^α u)(∂^β u) − source`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub name: String,
    pub linear: Vec<LinearTerm>,
    pub products: Vec<(ProductTerm, f64)>,
    /// Subtract the batch source term.
    pub uses_source: bool,
}

/// Value imposed on a Dirichlet group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryValue {
    Zero,
    /// The input function evaluated at the free coordinate of the edge.
    Input,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionSpec {
    Dirichlet {
        name: String,
        group: &'static str,
        channel: usize,
        value: BoundaryValue,
        weight: f64,
    },
    /// `u(group) = u(partner)` at paired points.
    Periodic {
        name: String,
        group: &'static str,
        partner: &'static str,
        channel: usize,
        weight: f64,
    },
}

impl ConditionSpec {
    pub fn name(&self) -> &str {
        match self {
            ConditionSpec::Dirichlet { name, .. } | ConditionSpec::Periodic { name, .. } => name,
        }
    }

    pub fn weight(&self) -> f64 {
        match self {
            ConditionSpec::Dirichlet { weight, .. } | ConditionSpec::Periodic { weight, .. } => {
                *weight
            }
        }
    }
}

/// A named set of points on one edge of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGroup {
    pub edge: Edge,
    /// Sized by the initial-point count instead of the boundary count.
    pub initial: bool,
    /// Reuse the free coordinates of another group, for periodic pairs.
    pub mirror_of: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub kind: ProblemKind,
    pub dim_names: Vec<&'static str>,
    pub channel_names: Vec<&'static str>,
    pub constants: BTreeMap<&'static str, f64>,
    pub request: DerivativeRequest,
    pub residuals: Vec<Residual>,
    pub groups: Vec<PointGroup>,
    pub conditions: Vec<ConditionSpec>,
    pub input: InputRole,
    /// Branch input width `Q`.
    pub features: usize,
    /// Highest total derivative order.
    pub order: usize,
}

impl PdeProblem {
    pub fn dims(&self) -> usize {
        self.dim_names.len()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn constant(&self, name: &str) -> Result<f64> {
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("{} has no constant `{name}`", self.kind)))
    }

    /// Names of the loss parts in report order.
    pub fn part_names(&self) -> Vec<String> {
        self.residuals
            .iter()
            .map(|r| r.name.clone())
            .chain(self.conditions.iter().map(|c| c.name().to_string()))
            .collect()
    }

    pub fn group(&self, name: &str) -> Option<&PointGroup> {
        self.groups.iter().find(|g| g.edge.name == name)
    }

    /// Modes per axis of a square sine-coefficient input.
    pub fn features_side(&self) -> Result<usize> {
        let side = (self.features as f64).sqrt().round() as usize;
        if side * side != self.features {
            return Err(Error::Config(format!(
                "{} input features are not a square grid",
                self.features
            )));
        }
        Ok(side)
    }
}

fn field(channel: usize, index: [usize; 2]) -> Field {
    Field::new(channel, index)
}

fn term(channel: usize, index: [usize; 2], coeff: f64) -> LinearTerm {
    LinearTerm::new(field(channel, index), coeff)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

const LEFT: Edge = Edge::new("left", 0, 0.0);
const RIGHT: Edge = Edge::new("right", 0, 1.0);
const BOTTOM: Edge = Edge::new("bottom", 1, 0.0);
const TOP: Edge = Edge::new("top", 1, 1.0);
const INITIAL: Edge = Edge::new("initial", 1, 0.0);

fn boundary(edge: Edge) -> PointGroup {
    PointGroup {
        edge,
        initial: false,
        mirror_of: None,
    }
}

fn square_walls() -> Vec<PointGroup> {
    [BOTTOM, TOP, LEFT, RIGHT]
        .into_iter()
        .map(boundary)
        .collect()
}

fn build_request(dims: usize, channels: usize, residuals: &[Residual]) -> DerivativeRequest {
    let mut req = DerivativeRequest::new(dims, channels);
    for r in residuals {
        for t in &r.linear {
            req = req.with_field(t.field.clone());
        }
        for (p, _) in &r.products {
            req = req.with_product(p.left.clone(), p.right.clone());
        }
        req = req.with_combination(r.linear.clone());
    }
    req
}

/// Fully populated problem definition for `kind`.
pub fn make_problem(kind: ProblemKind, options: &ProblemOptions) -> Result<PdeProblem> {
    let weight = |name: &str| {
        options
            .bc_weights
            .get(name)
            .copied()
            .unwrap_or(options.bc_weight)
    };
    let zero = |name: &str, group: &'static str, channel: usize| ConditionSpec::Dirichlet {
        name: name.to_string(),
        group,
        channel,
        value: BoundaryValue::Zero,
        weight: weight(name),
    };
    let mut constants = BTreeMap::new();
    let problem = match kind {
        ProblemKind::Scaling => {
            let order = options.scaling_order;
            let linear = MultiIndex::all_up_to(2, order)
                .into_iter()
                .map(|mi| {
                    let (a, b) = (mi.orders()[0], mi.orders()[1]);
                    LinearTerm::new(Field::new(0, mi), binomial(a + b, a))
                })
                .collect();
            let residuals = vec![Residual {
                name: "pde".into(),
                linear,
                products: vec![],
                uses_source: false,
            }];
            PdeProblem {
                kind,
                dim_names: vec!["x", "y"],
                channel_names: vec!["u"],
                constants,
                request: build_request(2, 1, &residuals),
                residuals,
                groups: vec![],
                conditions: vec![],
                input: InputRole::Unused,
                features: options.sensors,
                order,
            }
        }
        ProblemKind::ReactionDiffusion => {
            let (d, k) = (0.01, 0.01);
            constants.insert("D", d);
            constants.insert("k", k);
            let residuals = vec![Residual {
                name: "pde".into(),
                linear: vec![term(0, [0, 1], 1.0), term(0, [2, 0], -d)],
                products: vec![(ProductTerm::new(field(0, [0, 0]), field(0, [0, 0])), k)],
                uses_source: true,
            }];
            let groups = vec![
                PointGroup {
                    edge: INITIAL,
                    initial: true,
                    mirror_of: None,
                },
                boundary(LEFT),
                boundary(RIGHT),
            ];
            let conditions = vec![
                zero("initial", "initial", 0),
                zero("left", "left", 0),
                zero("right", "right", 0),
            ];
            PdeProblem {
                kind,
                dim_names: vec!["x", "t"],
                channel_names: vec!["u"],
                constants,
                request: build_request(2, 1, &residuals),
                residuals,
                groups,
                conditions,
                input: InputRole::Source,
                features: options.sensors,
                order: 2,
            }
        }
        ProblemKind::Burgers => {
            let nu = 0.01;
            constants.insert("nu", nu);
            let residuals = vec![Residual {
                name: "pde".into(),
                linear: vec![term(0, [0, 1], 1.0), term(0, [2, 0], -nu)],
                products: vec![(ProductTerm::new(field(0, [0, 0]), field(0, [1, 0])), 1.0)],
                uses_source: false,
            }];
            let groups = vec![
                PointGroup {
                    edge: INITIAL,
                    initial: true,
                    mirror_of: None,
                },
                boundary(LEFT),
                PointGroup {
                    edge: RIGHT,
                    initial: false,
                    mirror_of: Some("left"),
                },
            ];
            let conditions = vec![
                ConditionSpec::Dirichlet {
                    name: "initial".into(),
                    group: "initial",
                    channel: 0,
                    value: BoundaryValue::Input,
                    weight: weight("initial"),
                },
                ConditionSpec::Periodic {
                    name: "periodic".into(),
                    group: "left",
                    partner: "right",
                    channel: 0,
                    weight: weight("periodic"),
                },
            ];
            PdeProblem {
                kind,
                dim_names: vec!["x", "t"],
                channel_names: vec!["u"],
                constants,
                request: build_request(2, 1, &residuals),
                residuals,
                groups,
                conditions,
                input: InputRole::BoundaryData,
                features: options.sensors,
                order: 2,
            }
        }
        ProblemKind::Kirchhoff => {
            let modes = options.kirchhoff_modes;
            if modes == 0 {
                return Err(Error::Config("kirchhoff needs at least one mode".into()));
            }
            constants.insert("D", 0.01);
            let residuals = vec![Residual {
                name: "pde".into(),
                linear: vec![
                    term(0, [4, 0], 1.0),
                    term(0, [2, 2], 2.0),
                    term(0, [0, 4], 1.0),
                ],
                products: vec![],
                uses_source: true,
            }];
            let conditions = ["bottom", "top", "left", "right"]
                .into_iter()
                .map(|g| zero(g, g, 0))
                .collect();
            PdeProblem {
                kind,
                dim_names: vec!["x", "y"],
                channel_names: vec!["u"],
                constants,
                request: build_request(2, 1, &residuals),
                residuals,
                groups: square_walls(),
                conditions,
                input: InputRole::SineCoefficients,
                features: modes * modes,
                order: 4,
            }
        }
        ProblemKind::Stokes => {
            let mu = 0.01;
            constants.insert("mu", mu);
            let residuals = vec![
                Residual {
                    name: "pde_u".into(),
                    linear: vec![
                        term(0, [2, 0], mu),
                        term(0, [0, 2], mu),
                        term(2, [1, 0], -1.0),
                    ],
                    products: vec![],
                    uses_source: false,
                },
                Residual {
                    name: "pde_v".into(),
                    linear: vec![
                        term(1, [2, 0], mu),
                        term(1, [0, 2], mu),
                        term(2, [0, 1], -1.0),
                    ],
                    products: vec![],
                    uses_source: false,
                },
                Residual {
                    name: "pde_div".into(),
                    linear: vec![term(0, [1, 0], 1.0), term(1, [0, 1], 1.0)],
                    products: vec![],
                    uses_source: false,
                },
            ];
            let mut conditions = vec![
                ConditionSpec::Dirichlet {
                    name: "top.u".into(),
                    group: "top",
                    channel: 0,
                    value: BoundaryValue::Input,
                    weight: weight("top.u"),
                },
                zero("top.v", "top", 1),
            ];
            for (c, ch) in ["u", "v", "p"].into_iter().enumerate() {
                let name = format!("bottom.{ch}");
                conditions.push(zero(&name, "bottom", c));
            }
            for side in ["left", "right"] {
                for (c, ch) in ["u", "v"].into_iter().enumerate() {
                    let name = format!("{side}.{ch}");
                    conditions.push(zero(&name, side, c));
                }
            }
            PdeProblem {
                kind,
                dim_names: vec!["x", "y"],
                channel_names: vec!["u", "v", "p"],
                constants,
                request: build_request(2, 3, &residuals),
                residuals,
                groups: square_walls(),
                conditions,
                input: InputRole::BoundaryData,
                features: options.sensors,
                order: 2,
            }
        }
    };
    problem.request.validate(Some(problem.order))?;
    Ok(problem)
}

#[cfg(test)]
mod tests;
