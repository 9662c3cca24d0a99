//! Batch cost of the three strategies on the scaling operator over a grid
//! of function counts `M`, point counts `N` and orders `P`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::nets::{init_params, Activation, DeepONet, NetSpec};
use crate::pde::{build_batch, make_problem, Batch, PdeProblem, ProblemKind, ProblemOptions};
use crate::sampling::{sample_grf, sample_points, SampleMode};
use crate::scalar::Scalar;
use crate::strategies::{ProductMode, Strategy};
use crate::train::loss_and_grad;

/// Network and measurement settings shared by every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    /// Branch input width `Q`.
    pub features: usize,
    pub width: usize,
    pub depth: usize,
    pub latent: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Timed batches per point, after one untimed warm-up.
    pub repeats: usize,
    /// Retained-bytes ceiling of each batch graph.
    pub ceiling: Option<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            features: 50,
            width: 32,
            depth: 4,
            latent: 32,
            activation: Activation::Tanh,
            seed: 0,
            repeats: 3,
            ceiling: Some(2 << 30),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The graph hit the retained-bytes ceiling.
    DidNotFinish,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::DidNotFinish => "did-not-finish",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub strategy: Strategy,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub repeats: usize,
    /// Median wall time of a full batch in milliseconds.
    pub time_ms: Option<f64>,
    pub nodes: Option<usize>,
    pub retained_bytes: Option<usize>,
    pub loss: Option<f64>,
    pub status: Status,
}

/// The scaling problem, a network and one batch for a grid point.
pub struct BenchCase<T> {
    pub problem: PdeProblem,
    pub net: DeepONet<T>,
    pub batch: Batch<T>,
}

impl<T: Scalar> BenchCase<T> {
    pub fn new(m: usize, n: usize, p: usize, spec: &BenchSpec) -> Result<Self> {
        let options = ProblemOptions {
            scaling_order: p,
            sensors: spec.features,
            ..Default::default()
        };
        let problem = make_problem(ProblemKind::Scaling, &options)?;
        let mut net_spec =
            NetSpec::uniform(spec.features, 2, spec.width, spec.depth, spec.latent, 1);
        net_spec.activation = spec.activation;
        let net = init_params(&net_spec, spec.seed)?;
        let functions = sample_grf::<T>(spec.features, 0.2, 1.0, m, spec.seed)?;
        let points = sample_points(&problem, n, 0, 0, SampleMode::UniformRandom, spec.seed)?;
        let idx: Vec<usize> = (0..m).collect();
        let batch = build_batch(&problem, &functions, &idx, &points)?;
        Ok(BenchCase {
            problem,
            net,
            batch,
        })
    }

    /// Nodes recorded by the branch forward pass alone.
    pub fn branch_nodes(&self) -> Result<usize> {
        let graph = Graph::new();
        let bound = self.net.bind(&graph)?;
        let before = graph.len();
        bound.branch(graph.constant(self.batch.p.clone())?)?;
        Ok(graph.len() - before)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Times full batches (forward, residual, loss and backpropagation to θ)
/// at one grid point.
pub fn measure_batch<T: Scalar>(
    strategy: Strategy,
    m: usize,
    n: usize,
    p: usize,
    spec: &BenchSpec,
) -> Result<BenchPoint> {
    if spec.repeats < 3 {
        return Err(Error::Config(format!(
            "need at least 3 repeats, got {}",
            spec.repeats
        )));
    }
    let case = BenchCase::<T>::new(m, n, p, spec)?;
    let mut point = BenchPoint {
        strategy,
        m,
        n,
        p,
        repeats: spec.repeats,
        time_ms: None,
        nodes: None,
        retained_bytes: None,
        loss: None,
        status: Status::Ok,
    };
    let run = || {
        loss_and_grad(
            &case.problem,
            &case.net,
            strategy,
            ProductMode::PerTerm,
            &case.batch,
            spec.ceiling,
        )
    };
    let warm = match run() {
        Ok(s) => s,
        Err(Error::MemoryCeiling { .. }) => {
            point.status = Status::DidNotFinish;
            return Ok(point);
        }
        Err(e) => return Err(e),
    };
    drop(warm);
    let mut times = Vec::with_capacity(spec.repeats);
    for _ in 0..spec.repeats {
        let start = Instant::now();
        let step = run()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        point.nodes = Some(step.stats.node_count);
        point.retained_bytes = Some(step.stats.retained_bytes);
        point.loss = Some(step.loss.as_f64());
    }
    point.time_ms = Some(median(times));
    Ok(point)
}

/// Axes of a scaling sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub strategies: Vec<Strategy>,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        BenchGrid {
            strategies: Strategy::ALL.to_vec(),
            m: vec![1, 4, 16, 64],
            n: vec![128, 512, 2048],
            p: vec![1, 2, 4, 6],
        }
    }
}

impl BenchGrid {
    pub fn len(&self) -> usize {
        self.strategies.len() * self.m.len() * self.n.len() * self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in sweep order: strategy, then `M`, then `N`, then `P`.
    pub fn points(&self) -> Vec<(Strategy, usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &s in &self.strategies {
            for &m in &self.m {
                for &n in &self.n {
                    for &p in &self.p {
                        out.push((s, m, n, p));
                    }
                }
            }
        }
        out
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`")))
        })
        .collect()
}

impl FromStr for BenchGrid {
    type Err = Error;

    /// `key = v1,v2` entries separated by newlines or `;`, with keys
    /// `strategies`, `m`, `n` and `p`. Missing keys keep their defaults.
    fn from_str(text: &str) -> Result<Self> {
        let mut grid = BenchGrid::default();
        for entry in text.split(['\n', ';']) {
            let entry = entry.split('#').next().unwrap_or("").trim();
            if entry.is_empty() {
                continue;
            }
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected `key = values`, got `{entry}`")))?;
            let key = key.trim().to_ascii_lowercase();
            match key.as_str() {
                "strategies" | "strategy" => grid.strategies = list(&key, value)?,
                "m" => grid.m = list(&key, value)?,
                "n" => grid.n = list(&key, value)?,
                "p" => grid.p = list(&key, value)?,
                _ => return Err(Error::Config(format!("unknown grid key `{key}`"))),
            }
        }
        if grid.is_empty() {
            return Err(Error::Config("empty benchmark grid".into()));
        }
        Ok(grid)
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "strategy",
    "M",
    "N",
    "P",
    "time_ms",
    "nodes",
    "retained_bytes",
    "status",
];

pub fn write_points<W: std::io::Write>(points: &[BenchPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for pt in points {
        w.write_record([
            pt.strategy.to_string(),
            pt.m.to_string(),
            pt.n.to_string(),
            pt.p.to_string(),
            opt(pt.time_ms.map(|t| format!("{t:.6}"))),
            opt(pt.nodes.map(|v| v.to_string())),
            opt(pt.retained_bytes.map(|v| v.to_string())),
            pt.status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Measures every grid point in order and writes the CSV to `out`.
pub fn run_scaling<T: Scalar>(
    grid: &BenchGrid,
    spec: &BenchSpec,
    out: impl AsRef<Path>,
) -> Result<Vec<BenchPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("empty benchmark grid".into()));
    }
    let file = std::fs::File::create(out)?;
    let mut points = Vec::with_capacity(grid.len());
    for (s, m, n, p) in grid.points() {
        points.push(measure_batch::<T>(s, m, n, p, spec)?);
    }
    write_points(&points, std::io::BufWriter::new(file))?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchSpec {
        BenchSpec {
            features: 6,
            width: 8,
            depth: 2,
            latent: 8,
            ..Default::default()
        }
    }

    #[test]
    fn zcs_node_count_does_not_depend_on_m() {
        let spec = small();
        let nodes = |s, m| {
            measure_batch::<f64>(s, m, 6, 2, &spec)
                .unwrap()
                .nodes
                .unwrap()
        };
        assert_eq!(nodes(Strategy::Zcs, 1), nodes(Strategy::Zcs, 5));
        assert_eq!(nodes(Strategy::DataVect, 1), nodes(Strategy::DataVect, 5));
        assert!(nodes(Strategy::FuncLoop, 5) > nodes(Strategy::FuncLoop, 1));
        let b1 = BenchCase::<f64>::new(1, 6, 2, &spec)
            .unwrap()
            .branch_nodes()
            .unwrap();
        let b5 = BenchCase::<f64>::new(5, 6, 2, &spec)
            .unwrap()
            .branch_nodes()
            .unwrap();
        assert_eq!(b1, b5);
        assert!(b1 > 0);
    }

    #[test]
    fn measurements_are_deterministic() {
        let spec = small();
        for s in Strategy::ALL {
            let a = measure_batch::<f64>(s, 3, 8, 2, &spec).unwrap();
            let b = measure_batch::<f64>(s, 3, 8, 2, &spec).unwrap();
            assert_eq!((a.nodes, a.retained_bytes), (b.nodes, b.retained_bytes));
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.status, Status::Ok);
        }
    }

    #[test]
    fn ceiling_marks_did_not_finish() {
        let spec = BenchSpec {
            ceiling: Some(4096),
            ..small()
        };
        let pt = measure_batch::<f64>(Strategy::DataVect, 4, 16, 2, &spec).unwrap();
        assert_eq!(pt.status, Status::DidNotFinish);
        assert!(pt.time_ms.is_none());
        assert!(measure_batch::<f64>(
            Strategy::Zcs,
            1,
            4,
            1,
            &BenchSpec {
                repeats: 2,
                ..small()
            }
        )
        .is_err());
    }

    #[test]
    fn grid_parsing() {
        let g: BenchGrid = "m = 1, 2\nn=8 # points\np=1;strategies=zcs,funcloop"
            .parse()
            .unwrap();
        assert_eq!(g.m, [1, 2]);
        assert_eq!(g.n, [8]);
        assert_eq!(g.strategies, [Strategy::Zcs, Strategy::FuncLoop]);
        assert_eq!(g.len(), 4);
        assert_eq!(g.points()[1], (Strategy::Zcs, 2, 8, 1));
        assert!("m = 1\nq = 3".parse::<BenchGrid>().is_err());
        assert!("m = ".parse::<BenchGrid>().is_err());
        assert!("m = x".parse::<BenchGrid>().is_err());
        let d = BenchGrid::default();
        assert_eq!(
            (d.m.clone(), d.n.clone(), d.p.clone()),
            (vec![1, 4, 16, 64], vec![128, 512, 2048], vec![1, 2, 4, 6])
        );
    }

    #[test]
    fn single_point_grid_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let grid: BenchGrid = "strategies=zcs; m=2; n=6; p=1".parse().unwrap();
        let pts = run_scaling::<f64>(&grid, &small(), &path).unwrap();
        assert_eq!(pts.len(), 1);
        let mut rd = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(&rows[0][7], "ok");
    }
}
