//! Input functions, collocation points and the `ZCSD` dataset format.

use std::f64::consts::PI;
use std::path::Path;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::{read_file, Reader, Writer};
use crate::pde::PdeProblem;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const DATASET_MAGIC: &[u8; 4] = b"ZCSD";

/// Diagonal jitter added before factorizing a covariance matrix.
pub const JITTER: f64 = 1e-10;

/// Lower-triangular `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &Tensor<f64>) -> Result<Tensor<f64>> {
    let n = a.shape().dim(0)?;
    if a.dims() != [n, n] {
        return Err(Error::dim("cholesky", a.shape(), &[n, n].into()));
    }
    let ad = a.data();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = ad[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return Err(Error::Factorization {
                pivot: j,
                value: diag,
            });
        }
        let d = diag.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = ad[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Tensor::from_vec([n, n], l)
}

/// Functions sampled at fixed sensor locations.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSet<T> {
    /// `num_funcs × Q`.
    pub values: Tensor<T>,
    /// `Q × d_in`.
    pub sensors: Tensor<T>,
}

impl<T: Scalar> FunctionSet<T> {
    pub fn len(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.values.dims()[1]
    }

    /// Rows `idx` of the value table, `|idx| × Q`.
    pub fn rows(&self, idx: &[usize]) -> Tensor<T> {
        let q = self.features();
        let v = self.values.data();
        Tensor::from_fn([idx.len(), q], |k| v[idx[k / q] * q + k % q])
    }

    /// Piecewise-linear interpolation of functions `idx` at `s ∈ [0,1]`,
    /// for one-dimensional equispaced sensors. Returns `|idx| × |s|`.
    pub fn interpolate(&self, idx: &[usize], s: &[T]) -> Tensor<T> {
        let q = self.features();
        let v = self.values.data();
        let last = T::lit((q - 1) as f64);
        Tensor::from_fn([idx.len(), s.len()], |k| {
            let (f, j) = (idx[k / s.len()], k % s.len());
            let pos = (s[j] * last).max(T::zero()).min(last);
            let lo = pos.floor().to_usize().unwrap_or(0).min(q - 2);
            let w = pos - T::lit(lo as f64);
            v[f * q + lo] * (T::one() - w) + v[f * q + lo + 1] * w
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_dataset(
            path,
            &[("values", &self.values), ("sensors", &self.sensors)],
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut named = read_dataset(path)?;
        let sensors = take_named(&mut named, "sensors")?;
        let values = take_named(&mut named, "values")?;
        Ok(FunctionSet { values, sensors })
    }
}

fn take_named<T: Scalar>(named: &mut Vec<(String, Tensor<T>)>, name: &str) -> Result<Tensor<T>> {
    let pos = named
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Config(format!("dataset has no tensor `{name}`")))?;
    Ok(named.remove(pos).1)
}

/// `Q` equispaced points on `[0, 1]`.
pub fn linspace<T: Scalar>(q: usize) -> Vec<T> {
    if q == 1 {
        return vec![T::zero()];
    }
    (0..q).map(|i| T::lit(i as f64 / (q - 1) as f64)).collect()
}

fn check_kernel(q: usize, length_scale: f64, variance: f64) -> Result<()> {
    if q < 2 {
        return Err(Error::Config(format!("need at least 2 sensors, got {q}")));
    }
    if !(length_scale > 0.0) || !(variance >= 0.0) {
        return Err(Error::Config(format!(
            "invalid kernel: length scale {length_scale}, variance {variance}"
        )));
    }
    Ok(())
}

/// `num_funcs` draws at `s`, row-major, via Cholesky of `K + jitter·I`.
fn gp_draws(
    s: &[f64],
    kernel: impl Fn(f64, f64) -> f64,
    num_funcs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let q = s.len();
    let k = Tensor::from_fn([q, q], |idx| {
        let (i, j) = (idx / q, idx % q);
        kernel(s[i], s[j]) + if i == j { JITTER } else { 0.0 }
    });
    let l = cholesky(&k)?;
    let ld = l.data();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(num_funcs * q);
    let mut xi = vec![0.0; q];
    for _ in 0..num_funcs {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..q {
            values.push((0..=i).map(|j| ld[i * q + j] * xi[j]).sum());
        }
    }
    Ok(values)
}

fn function_set<T: Scalar>(values: Vec<f64>, s: Vec<f64>) -> Result<FunctionSet<T>> {
    let q = s.len();
    Ok(FunctionSet {
        values: Tensor::from_vec(
            [values.len() / q, q],
            values.into_iter().map(T::lit).collect(),
        )?,
        sensors: Tensor::from_vec([q, 1], s.into_iter().map(T::lit).collect())?,
    })
}

/// Draws from a zero-mean Gaussian process with kernel
/// `σ²·exp(−(s−s′)²/2ℓ²)` on `Q` equispaced sensors in `[0, 1]`.
pub fn sample_grf<T: Scalar>(
    q: usize,
    length_scale: f64,
    variance: f64,
    num_funcs: usize,
    seed: u64,
) -> Result<FunctionSet<T>> {
    check_kernel(q, length_scale, variance)?;
    let s: Vec<f64> = linspace(q);
    let kernel = |a: f64, b: f64| {
        variance * (-(a - b) * (a - b) / (2.0 * length_scale * length_scale)).exp()
    };
    function_set(gp_draws(&s, kernel, num_funcs, seed)?, s)
}

/// Like [`sample_grf`] with the periodic kernel
/// `σ²·exp(−2·sin²(π(s−s′))/ℓ²)`, so every draw has `f(0) = f(1)`.
pub fn sample_grf_periodic<T: Scalar>(
    q: usize,
    length_scale: f64,
    variance: f64,
    num_funcs: usize,
    seed: u64,
) -> Result<FunctionSet<T>> {
    check_kernel(q, length_scale, variance)?;
    let s: Vec<f64> = linspace(q);
    let kernel = |a: f64, b: f64| {
        let d = (PI * (a - b)).sin();
        variance * (-2.0 * d * d / (length_scale * length_scale)).exp()
    };
    // the last sensor coincides with the first on the circle
    let open = gp_draws(&s[..q - 1], kernel, num_funcs, seed)?;
    let mut values = Vec::with_capacity(num_funcs * q);
    for row in open.chunks(q - 1) {
        values.extend_from_slice(row);
        values.push(row[0]);
    }
    function_set(values, s)
}

/// Independent standard-normal feature vectors, e.g. series coefficients.
/// `sensors` holds the 1-based `(r, s)` mode of each feature for `R×S`
/// coefficient grids.
pub fn sample_coefficients<T: Scalar>(
    r: usize,
    s: usize,
    num_funcs: usize,
    seed: u64,
) -> FunctionSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = r * s;
    let values = Tensor::from_fn([num_funcs, q], |_| T::lit(rng.sample(StandardNormal)));
    let sensors = Tensor::from_fn([q, 2], |k| {
        let mode = k / 2;
        T::lit(if k % 2 == 0 {
            (mode / s + 1) as f64
        } else {
            (mode % s + 1) as f64
        })
    });
    FunctionSet { values, sensors }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    #[default]
    UniformRandom,
    /// Cell centers of a regular grid.
    Grid,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_random" | "random" => Ok(SampleMode::UniformRandom),
            "grid" => Ok(SampleMode::Grid),
            _ => Err(Error::Config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

/// Fixed part of an edge of the unit square: coordinate `axis` is pinned
/// to `value`, the other one varies.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub name: &'static str,
    pub axis: usize,
    pub value: f64,
}

impl Edge {
    pub const fn new(name: &'static str, axis: usize, value: f64) -> Self {
        Edge { name, axis, value }
    }
}

/// Collocation points of one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T> {
    /// `N × D`, strictly inside the domain.
    pub interior: Tensor<T>,
    /// Named boundary or initial point groups, `K × D` each.
    pub groups: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> PointSet<T> {
    pub fn group(&self, name: &str) -> Option<&Tensor<T>> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut named: Vec<(&str, &Tensor<T>)> = vec![("interior", &self.interior)];
        named.extend(self.groups.iter().map(|(n, t)| (n.as_str(), t)));
        write_dataset(path, &named)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut named = read_dataset(path)?;
        let interior = take_named(&mut named, "interior")?;
        Ok(PointSet {
            interior,
            groups: named,
        })
    }
}

fn open01(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

/// Cell centers of `k` equal cells on `[0, 1]`.
fn centers(k: usize) -> Vec<f64> {
    (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
}

/// `n` interior points in `(0,1)^d`. Grid mode needs `n = kᵈ`.
pub fn interior_points<T: Scalar>(
    d: usize,
    n: usize,
    mode: SampleMode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<T>> {
    match mode {
        SampleMode::UniformRandom => Ok(Tensor::from_fn([n, d], |_| T::lit(open01(rng)))),
        SampleMode::Grid => {
            let k = (n as f64).powf(1.0 / d as f64).round() as usize;
            if k.pow(d as u32) != n {
                return Err(Error::Config(format!(
                    "grid sampling needs a perfect power: {n} points in {d}-D"
                )));
            }
            let c = centers(k);
            Ok(Tensor::from_fn([n, d], |idx| {
                let (row, axis) = (idx / d, idx % d);
                let digit = row / k.pow((d - 1 - axis) as u32) % k;
                T::lit(c[digit])
            }))
        }
    }
}

/// `n` points on an edge of the unit square.
pub fn edge_points<T: Scalar>(
    edge: &Edge,
    n: usize,
    mode: SampleMode,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let free: Vec<f64> = match mode {
        SampleMode::UniformRandom => (0..n).map(|_| open01(rng)).collect(),
        SampleMode::Grid => centers(n),
    };
    Tensor::from_fn([n, 2], |idx| {
        let (row, axis) = (idx / 2, idx % 2);
        T::lit(if axis == edge.axis {
            edge.value
        } else {
            free[row]
        })
    })
}

/// Interior and boundary points for `problem`, deterministic per seed.
pub fn sample_points<T: Scalar>(
    problem: &PdeProblem,
    n_interior: usize,
    n_boundary: usize,
    n_initial: usize,
    mode: SampleMode,
    seed: u64,
) -> Result<PointSet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = interior_points(problem.dims(), n_interior, mode, &mut rng)?;
    let mut groups: Vec<(String, Tensor<T>)> = Vec::with_capacity(problem.groups.len());
    for g in &problem.groups {
        let pts = match g.mirror_of {
            Some(src) => {
                let base = groups
                    .iter()
                    .find(|(n, _)| n == src)
                    .ok_or_else(|| {
                        Error::Config(format!("group `{}` mirrors unknown `{src}`", g.edge.name))
                    })?
                    .1
                    .clone();
                let mut data = base.into_data();
                for row in data.chunks_mut(2) {
                    row[g.edge.axis] = T::lit(g.edge.value);
                }
                Tensor::from_vec([data.len() / 2, 2], data)?
            }
            None => edge_points(
                &g.edge,
                if g.initial { n_initial } else { n_boundary },
                mode,
                &mut rng,
            ),
        };
        groups.push((g.edge.name.to_string(), pts));
    }
    Ok(PointSet { interior, groups })
}

/// Writes named tensors as a `ZCSD` file.
pub fn write_dataset<T: Scalar>(
    path: impl AsRef<Path>,
    tensors: &[(&str, &Tensor<T>)],
) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut w = Writer::new(file);
    w.header(DATASET_MAGIC)?;
    w.u32(u32::try_from(tensors.len()).map_err(|_| Error::Config("too many tensors".into()))?)?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        w.u32(u32::try_from(bytes.len()).map_err(|_| Error::Config("name too long".into()))?)?;
        w.bytes(bytes)?;
        w.tensor(*t)?;
    }
    w.finish()
}

pub fn read_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    parse_dataset(&read_file(path.as_ref())?)
}

pub fn parse_dataset<T: Scalar>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader::new(bytes);
    r.header(DATASET_MAGIC)?;
    let count = r.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let start = r.offset();
        let raw = r.take(len, "name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::Format {
            offset: start,
            message: "name is not valid UTF-8".into(),
        })?;
        out.push((name.to_string(), r.tensor()?));
    }
    if !r.at_end() {
        return r.fail("trailing bytes after last tensor");
    }
    Ok(out)
}
