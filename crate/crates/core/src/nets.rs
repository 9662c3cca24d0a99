//! DeepONet operator networks.
//!
//! The branch net maps function samples `p[M×Q]` to `C·L` latent features,
//! the trunk net maps coordinates `x[N×D]` to `C·L` features, and channel `c`
//! of the output is the latent dot product of the `c`-th slices plus a bias.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::autograd::{concat, gelu_fn, softplus_fn, Graph, Var};
use crate::error::{Error, Result};
use crate::format::{read_file, Reader, Writer};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const CHECKPOINT_MAGIC: &[u8; 4] = b"ZCSM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Gelu,
    Softplus,
}

impl Activation {
    pub fn apply<'g, T: Scalar>(self, v: Var<'g, T>) -> Result<Var<'g, T>> {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Gelu => v.gelu(),
            Activation::Softplus => v.softplus(),
        }
    }

    pub fn eval<T: Scalar>(self, t: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Tanh => t.map(T::tanh),
            Activation::Gelu => t.map(gelu_fn),
            Activation::Softplus => t.map(softplus_fn),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Softplus => "softplus",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "gelu" => Ok(Activation::Gelu),
            "softplus" => Ok(Activation::Softplus),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

/// Architecture of a [`DeepONet`]. Hidden widths exclude the input width and
/// the `channels · latent` output width.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    pub q: usize,
    pub d: usize,
    pub branch_hidden: Vec<usize>,
    pub trunk_hidden: Vec<usize>,
    pub latent: usize,
    pub channels: usize,
    pub activation: Activation,
}

impl NetSpec {
    /// Equal hidden widths on both sides.
    pub fn uniform(
        q: usize,
        d: usize,
        width: usize,
        depth: usize,
        latent: usize,
        channels: usize,
    ) -> Self {
        NetSpec {
            q,
            d,
            branch_hidden: vec![width; depth],
            trunk_hidden: vec![width; depth],
            latent,
            channels,
            activation: Activation::Tanh,
        }
    }

    pub fn branch_widths(&self) -> Vec<usize> {
        let mut w = vec![self.q];
        w.extend(&self.branch_hidden);
        w.push(self.channels * self.latent);
        w
    }

    pub fn trunk_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d];
        w.extend(&self.trunk_hidden);
        w.push(self.channels * self.latent);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.branch_widths().into_iter().chain(self.trunk_widths());
        if all.into_iter().any(|w| w == 0) {
            return Err(Error::Config(format!(
                "all network widths must be ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Fully connected net computing `h ← act(h·W + b)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub widths: Vec<usize>,
    pub weights: Vec<Tensor<T>>,
    pub biases: Vec<Tensor<T>>,
    pub activation: Activation,
    /// Whether the last layer is followed by the activation too.
    pub activate_output: bool,
}

impl<T: Scalar> Mlp<T> {
    fn init(
        widths: &[usize],
        activation: Activation,
        activate_output: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (r, c) = (pair[0], pair[1]);
            let limit = (6.0 / (r + c) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            weights.push(Tensor::from_fn([r, c], |_| T::lit(dist.sample(rng))));
            biases.push(Tensor::zeros([c]));
        }
        Mlp {
            widths: widths.to_vec(),
            weights,
            biases,
            activation,
            activate_output,
        }
    }

    pub fn forward<'g>(&self, params: &[Var<'g, T>], x: Var<'g, T>) -> Result<Var<'g, T>> {
        let layers = self.weights.len();
        let mut h = x;
        for l in 0..layers {
            h = h.matmul(params[2 * l])?.add(params[2 * l + 1])?;
            if l + 1 < layers || self.activate_output {
                h = self.activation.apply(h)?;
            }
        }
        Ok(h)
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let layers = self.weights.len();
        let mut h = x.clone();
        for l in 0..layers {
            h = h.matmul(&self.weights[l])?.add(&self.biases[l])?;
            if l + 1 < layers || self.activate_output {
                h = self.activation.eval(&h);
            }
        }
        Ok(h)
    }

    fn tensor_count(&self) -> usize {
        2 * self.weights.len()
    }
}

/// All θ tensors in a fixed order: branch (W, b) per layer, trunk (W, b) per
/// layer, then the per-channel merge bias β.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Writes the parameters as a `ZCSM` checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut w = Writer::new(file);
        w.header(CHECKPOINT_MAGIC)?;
        for t in &self.tensors {
            w.tensor(t)?;
        }
        w.finish()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(CHECKPOINT_MAGIC)?;
        let mut tensors = Vec::new();
        while !r.at_end() {
            tensors.push(r.tensor()?);
        }
        Ok(ParamSet { tensors })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepONet<T> {
    pub spec: NetSpec,
    pub branch: Mlp<T>,
    pub trunk: Mlp<T>,
    /// Merge bias, one entry per output channel.
    pub beta: Tensor<T>,
}

/// Glorot-uniform weights, zero biases and zero merge bias, deterministic
/// per seed.
pub fn init_params<T: Scalar>(spec: &NetSpec, seed: u64) -> Result<DeepONet<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branch = Mlp::init(&spec.branch_widths(), spec.activation, false, &mut rng);
    let trunk = Mlp::init(&spec.trunk_widths(), spec.activation, true, &mut rng);
    Ok(DeepONet {
        spec: spec.clone(),
        branch,
        trunk,
        beta: Tensor::zeros([spec.channels]),
    })
}

impl<T: Scalar> DeepONet<T> {
    pub fn params(&self) -> ParamSet<T> {
        let mut tensors = Vec::new();
        for mlp in [&self.branch, &self.trunk] {
            for (w, b) in mlp.weights.iter().zip(&mlp.biases) {
                tensors.push(w.clone());
                tensors.push(b.clone());
            }
        }
        tensors.push(self.beta.clone());
        ParamSet { tensors }
    }

    /// Replaces θ, checking every shape against the current network.
    pub fn set_params(&mut self, params: &ParamSet<T>) -> Result<()> {
        let expected = self.params();
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, network needs {}",
                params.len(),
                expected.len()
            )));
        }
        for (e, p) in expected.tensors.iter().zip(&params.tensors) {
            if e.shape() != p.shape() {
                return Err(Error::dim("set_params", e.shape(), p.shape()));
            }
        }
        let mut it = params.tensors.iter().cloned();
        for mlp in [&mut self.branch, &mut self.trunk] {
            for l in 0..mlp.weights.len() {
                mlp.weights[l] = it.next().expect("checked length");
                mlp.biases[l] = it.next().expect("checked length");
            }
        }
        self.beta = it.next().expect("checked length");
        Ok(())
    }

    /// Records θ as leaves of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<T>) -> Result<BoundNet<'_, 'g, T>> {
        let params = self
            .params()
            .tensors
            .into_iter()
            .map(|t| graph.leaf(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundNet {
            net: self,
            graph,
            params,
        })
    }

    /// Plain tensor evaluation without recording: `u[M×N×C]`.
    pub fn eval(&self, p: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, n) = (p.shape().dim(0)?, x.shape().dim(0)?);
        let (c, l) = (self.spec.channels, self.spec.latent);
        let b = self.branch.eval(p)?;
        let t = self.trunk.eval(x)?;
        let mut out = Tensor::zeros([m, n, c]);
        for ch in 0..c {
            let bc = b.slice(1, ch * l, (ch + 1) * l)?;
            let tc = t.slice(1, ch * l, (ch + 1) * l)?;
            let u = bc.matmul(&tc.transpose()?)?;
            let beta = self.beta.data()[ch];
            for (k, &v) in u.data().iter().enumerate() {
                out.data_mut()[k * c + ch] = v + beta;
            }
        }
        Ok(out)
    }
}

/// A network whose parameters are leaves of one graph.
pub struct BoundNet<'n, 'g, T> {
    net: &'n DeepONet<T>,
    graph: &'g Graph<T>,
    params: Vec<Var<'g, T>>,
}

impl<'n, 'g, T: Scalar> BoundNet<'n, 'g, T> {
    pub fn net(&self) -> &'n DeepONet<T> {
        self.net
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    /// θ leaves in [`ParamSet`] order.
    pub fn params(&self) -> &[Var<'g, T>] {
        &self.params
    }

    pub fn branch(&self, p: Var<'g, T>) -> Result<Var<'g, T>> {
        let k = self.net.branch.tensor_count();
        self.net.branch.forward(&self.params[..k], p)
    }

    pub fn trunk(&self, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let k = self.net.branch.tensor_count();
        let j = self.net.trunk.tensor_count();
        self.net.trunk.forward(&self.params[k..k + j], x)
    }

    fn beta(&self, c: usize) -> Result<Var<'g, T>> {
        self.params.last().expect("beta").slice(0, c, c + 1)
    }

    fn latent_slice(&self, h: Var<'g, T>, c: usize) -> Result<Var<'g, T>> {
        if self.net.spec.channels == 1 {
            return Ok(h);
        }
        let l = self.net.spec.latent;
        h.slice(1, c * l, (c + 1) * l)
    }

    /// Cartesian-product forward from precomputed branch and trunk features,
    /// one `M×N` field per channel.
    pub fn merge_aligned(&self, b: Var<'g, T>, t: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        (0..self.net.spec.channels)
            .map(|c| {
                let bc = self.latent_slice(b, c)?;
                let tc = self.latent_slice(t, c)?;
                bc.matmul(tc.t()?)?.add(self.beta(c)?)
            })
            .collect()
    }

    /// `u[i, j, c]` as one `M×N` variable per channel.
    pub fn forward_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        check_width("forward_aligned", p, self.net.spec.q)?;
        check_width("forward_aligned", x, self.net.spec.d)?;
        let b = self.branch(p)?;
        let t = self.trunk(x)?;
        self.merge_aligned(b, t)
    }

    /// `u[M×N×C]`.
    pub fn forward_aligned(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let chans = self.forward_channels(p, x)?;
        let dims = chans[0].shape();
        let (m, n) = (dims.dims()[0], dims.dims()[1]);
        let parts = chans
            .into_iter()
            .map(|u| u.reshape([m, n, 1]))
            .collect::<Result<Vec<_>>>()?;
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        concat(&parts, 2)
    }

    /// Row-aligned forward, one length-`K` variable per channel.
    pub fn forward_pointwise_channels(
        &self,
        p: Var<'g, T>,
        x: Var<'g, T>,
    ) -> Result<Vec<Var<'g, T>>> {
        check_width("forward_pointwise", p, self.net.spec.q)?;
        check_width("forward_pointwise", x, self.net.spec.d)?;
        if p.shape().dims()[0] != x.shape().dims()[0] {
            return Err(Error::dim("forward_pointwise", &p.shape(), &x.shape()));
        }
        let b = self.branch(p)?;
        let t = self.trunk(x)?;
        let bt = b.mul(t)?;
        (0..self.net.spec.channels)
            .map(|c| self.latent_slice(bt, c)?.sum(&[1])?.add(self.beta(c)?))
            .collect()
    }

    /// `u[K×C]`.
    pub fn forward_pointwise(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let chans = self.forward_pointwise_channels(p, x)?;
        let k = chans[0].shape().dims()[0];
        let parts = chans
            .into_iter()
            .map(|u| u.reshape([k, 1]))
            .collect::<Result<Vec<_>>>()?;
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        concat(&parts, 1)
    }
}

fn check_width<T: Scalar>(op: &'static str, v: Var<'_, T>, width: usize) -> Result<()> {
    let s = v.shape();
    if s.rank() != 2 || s.dims()[1] != width {
        return Err(Error::dim(op, &s, &[0, width].into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(c: usize) -> NetSpec {
        NetSpec::uniform(3, 2, 8, 2, 4, c)
    }

    fn rand_tensor(seed: u64, shape: [usize; 2]) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params::<f64>(&spec(1), 7).unwrap();
        let b = init_params::<f64>(&spec(1), 7).unwrap();
        let c = init_params::<f64>(&spec(1), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        for mlp in [&a.branch, &a.trunk] {
            for w in &mlp.weights {
                let (r, c) = (w.dims()[0], w.dims()[1]);
                assert!(w.max_abs() <= (6.0 / (r + c) as f64).sqrt());
            }
            assert!(mlp.biases.iter().all(|b| b.max_abs() == 0.0));
        }
        assert_eq!(a.beta.max_abs(), 0.0);
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut s = spec(1);
        s.trunk_hidden = vec![4, 0];
        assert!(matches!(init_params::<f64>(&s, 0), Err(Error::Config(_))));
    }

    #[test]
    fn linear_closed_form() {
        // branch: p ↦ p, trunk: x ↦ w·x, u = p·w·x + β
        let s = NetSpec {
            q: 1,
            d: 1,
            branch_hidden: vec![],
            trunk_hidden: vec![],
            latent: 1,
            channels: 1,
            activation: Activation::Tanh,
        };
        let mut net = init_params::<f64>(&s, 0).unwrap();
        net.branch.weights[0] = Tensor::scalar(1.0).reshape([1, 1]).unwrap();
        net.trunk.weights[0] = Tensor::scalar(0.5).reshape([1, 1]).unwrap();
        net.trunk.activate_output = false;
        net.beta = Tensor::from_vec([1], vec![0.25]).unwrap();
        let p = Tensor::from_vec([2, 1], vec![2.0, -1.0]).unwrap();
        let x = Tensor::from_vec([3, 1], vec![0.0, 1.0, 2.0]).unwrap();
        let u = net.eval(&p, &x).unwrap();
        let g = Graph::new();
        let bound = net.bind(&g).unwrap();
        let uv = bound
            .forward_aligned(
                g.constant(p.clone()).unwrap(),
                g.constant(x.clone()).unwrap(),
            )
            .unwrap();
        for i in 0..2 {
            for j in 0..3 {
                let want = p.data()[i] * 0.5 * x.data()[j] + 0.25;
                assert_eq!(u.get(&[i, j, 0]), Some(want));
                assert_eq!(uv.value().get(&[i, j, 0]), Some(want));
            }
        }
    }

    #[test]
    fn aligned_shape_and_eval_agree() {
        let net = init_params::<f64>(&spec(2), 1).unwrap();
        let p = rand_tensor(1, [3, 3]);
        let x = rand_tensor(2, [5, 2]);
        let g = Graph::new();
        let bound = net.bind(&g).unwrap();
        let u = bound
            .forward_aligned(
                g.constant(p.clone()).unwrap(),
                g.constant(x.clone()).unwrap(),
            )
            .unwrap();
        assert_eq!(u.shape().dims(), &[3, 5, 2]);
        let diff = u.value().sub(&net.eval(&p, &x).unwrap()).unwrap().max_abs();
        assert!(diff <= 1e-14);
    }

    #[test]
    fn pointwise_matches_cartesian_expansion() {
        let mut net = init_params::<f64>(&spec(2), 3).unwrap();
        net.beta = Tensor::from_vec([2], vec![0.3, -0.2]).unwrap();
        let (m, n) = (4, 6);
        let p = rand_tensor(4, [m, 3]);
        let x = rand_tensor(5, [n, 2]);
        let ph = Tensor::from_fn([m * n, 3], |k| p.data()[(k / 3) / n * 3 + k % 3]);
        let xh = Tensor::from_fn([m * n, 2], |k| x.data()[(k / 2) % n * 2 + k % 2]);
        let g = Graph::new();
        let bound = net.bind(&g).unwrap();
        let aligned = bound
            .forward_aligned(g.constant(p).unwrap(), g.constant(x).unwrap())
            .unwrap();
        let pointwise = bound
            .forward_pointwise(g.constant(ph).unwrap(), g.constant(xh).unwrap())
            .unwrap();
        let a = aligned.value().reshape([m * n, 2]).unwrap();
        let diff = a.sub(&pointwise.value()).unwrap().max_abs();
        assert!(diff <= 1e-12 * a.max_abs(), "{diff}");
    }

    #[test]
    fn duplicated_rows_give_duplicated_outputs() {
        let net = init_params::<f64>(&spec(1), 9).unwrap();
        let p = rand_tensor(6, [1, 3]);
        let x = rand_tensor(7, [1, 2]);
        let p2 = Tensor::concat(&[&p, &p], 0).unwrap();
        let x2 = Tensor::concat(&[&x, &x], 0).unwrap();
        let g = Graph::new();
        let bound = net.bind(&g).unwrap();
        let u = bound
            .forward_pointwise(g.constant(p2).unwrap(), g.constant(x2).unwrap())
            .unwrap()
            .value();
        assert_eq!(u.data()[0], u.data()[1]);
        let single = net.eval(&p, &x).unwrap();
        assert!((single.data()[0] - u.data()[0]).abs() <= 1e-15);
    }

    #[test]
    fn permuting_functions_permutes_output() {
        let net = init_params::<f64>(&spec(1), 2).unwrap();
        let p = rand_tensor(8, [3, 3]);
        let x = rand_tensor(9, [4, 2]);
        let perm = [2, 0, 1];
        let pp = Tensor::from_fn([3, 3], |k| p.data()[perm[k / 3] * 3 + k % 3]);
        let u = net.eval(&p, &x).unwrap();
        let up = net.eval(&pp, &x).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            for j in 0..4 {
                assert_eq!(up.get(&[i, j, 0]), u.get(&[src, j, 0]));
            }
        }
    }

    #[test]
    fn shape_errors() {
        let net = init_params::<f64>(&spec(1), 0).unwrap();
        let g = Graph::new();
        let bound = net.bind(&g).unwrap();
        let p = g.constant(Tensor::zeros([2, 3])).unwrap();
        let bad_x = g.constant(Tensor::zeros([5, 3])).unwrap();
        assert!(bound.forward_channels(p, bad_x).is_err());
        let x = g.constant(Tensor::zeros([5, 2])).unwrap();
        assert!(bound.forward_pointwise(p, x).is_err());
    }

    #[test]
    fn params_round_trip_through_checkpoint() {
        let net = init_params::<f64>(&spec(3), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.zcsm");
        net.params().save(&path).unwrap();
        let loaded = ParamSet::<f64>::load(&path).unwrap();
        assert_eq!(loaded, net.params());
        let mut other = init_params::<f64>(&spec(3), 5).unwrap();
        other.set_params(&loaded).unwrap();
        assert_eq!(other, net);

        let bytes = std::fs::read(&path).unwrap();
        let err = ParamSet::<f64>::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let err = ParamSet::<f64>::from_bytes(&bad).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let small = init_params::<f64>(&spec(1), 0).unwrap();
        let mut big = init_params::<f64>(&spec(2), 0).unwrap();
        assert!(big.set_params(&small.params()).is_err());
    }
}
