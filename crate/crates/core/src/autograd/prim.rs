use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// A recorded primitive. Parameters (exponents, axes, target shapes) are part
/// of the identity of the primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Prim {
    Add,
    Sub,
    Mul,
    Div,
    /// `x^c` for a constant exponent.
    Pow(f64),
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Sin,
    Cos,
    Tanh,
    Erf,
    Sigmoid,
    Softplus,
    /// Exact GELU, `x·Φ(x)`.
    Gelu,
    MatMul,
    Transpose,
    Sum(Vec<usize>),
    Mean(Vec<usize>),
    SumTo(Shape),
    BroadcastTo(Shape),
    Reshape(Shape),
    Concat(usize),
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    Pad {
        axis: usize,
        before: usize,
        after: usize,
    },
    /// User-registered primitive with a tensor-level VJP (see
    /// [`Graph::register_opaque`](super::Graph::register_opaque)).
    Opaque(usize),
}

/// Names of the built-in primitives, in registry order.
pub const BUILTIN_PRIMITIVES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "pow",
    "neg",
    "scale",
    "add_scalar",
    "exp",
    "sin",
    "cos",
    "tanh",
    "erf",
    "sigmoid",
    "softplus",
    "gelu",
    "matmul",
    "transpose",
    "reduce_sum",
    "reduce_mean",
    "sum_to",
    "broadcast_to",
    "reshape",
    "concat",
    "slice",
    "pad",
];

impl Prim {
    pub fn name(&self) -> &'static str {
        match self {
            Prim::Add => "add",
            Prim::Sub => "sub",
            Prim::Mul => "mul",
            Prim::Div => "div",
            Prim::Pow(_) => "pow",
            Prim::Neg => "neg",
            Prim::Scale(_) => "scale",
            Prim::AddScalar(_) => "add_scalar",
            Prim::Exp => "exp",
            Prim::Sin => "sin",
            Prim::Cos => "cos",
            Prim::Tanh => "tanh",
            Prim::Erf => "erf",
            Prim::Sigmoid => "sigmoid",
            Prim::Softplus => "softplus",
            Prim::Gelu => "gelu",
            Prim::MatMul => "matmul",
            Prim::Transpose => "transpose",
            Prim::Sum(_) => "reduce_sum",
            Prim::Mean(_) => "reduce_mean",
            Prim::SumTo(_) => "sum_to",
            Prim::BroadcastTo(_) => "broadcast_to",
            Prim::Reshape(_) => "reshape",
            Prim::Concat(_) => "concat",
            Prim::Slice { .. } => "slice",
            Prim::Pad { .. } => "pad",
            Prim::Opaque(_) => "opaque",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Prim::Add | Prim::Sub | Prim::Mul | Prim::Div | Prim::MatMul => Some(2),
            Prim::Concat(_) | Prim::Opaque(_) => None,
            _ => Some(1),
        }
    }

    /// Forward kernel of a built-in primitive.
    pub(crate) fn forward<T: Scalar>(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if let Some(n) = self.arity() {
            if inputs.len() != n {
                return Err(Error::Config(format!(
                    "primitive `{}` takes {n} inputs, got {}",
                    self.name(),
                    inputs.len()
                )));
            }
        }
        let x = inputs.first().copied();
        let un = |f: &dyn Fn(T) -> T| Ok(x.expect("arity checked").map(f));
        match self {
            Prim::Add => inputs[0].add(inputs[1]),
            Prim::Sub => inputs[0].sub(inputs[1]),
            Prim::Mul => inputs[0].mul(inputs[1]),
            Prim::Div => inputs[0].div(inputs[1]),
            Prim::MatMul => inputs[0].matmul(inputs[1]),
            Prim::Pow(c) => {
                let c = *c;
                if c == c.trunc() && c.abs() <= 64.0 {
                    let n = c as i32;
                    un(&|v: T| v.powi(n))
                } else {
                    let e = T::lit(c);
                    un(&|v: T| v.powf(e))
                }
            }
            Prim::Neg => un(&|v: T| -v),
            Prim::Scale(c) => {
                let c = T::lit(*c);
                un(&|v: T| v * c)
            }
            Prim::AddScalar(c) => {
                let c = T::lit(*c);
                un(&|v: T| v + c)
            }
            Prim::Exp => un(&|v: T| v.exp()),
            Prim::Sin => un(&|v: T| v.sin()),
            Prim::Cos => un(&|v: T| v.cos()),
            Prim::Tanh => un(&|v: T| v.tanh()),
            Prim::Erf => un(&|v: T| v.erf()),
            Prim::Sigmoid => un(&sigmoid),
            Prim::Softplus => un(&softplus),
            Prim::Gelu => un(&gelu),
            Prim::Transpose => x.expect("arity checked").transpose(),
            Prim::Sum(axes) => x.expect("arity checked").sum(axes),
            Prim::Mean(axes) => x.expect("arity checked").mean(axes),
            Prim::SumTo(s) => x.expect("arity checked").sum_to(s),
            Prim::BroadcastTo(s) => x.expect("arity checked").broadcast_to(s),
            Prim::Reshape(s) => x.expect("arity checked").reshape(s.clone()),
            Prim::Concat(axis) => Tensor::concat(inputs, *axis),
            Prim::Slice { axis, start, end } => {
                x.expect("arity checked").slice(*axis, *start, *end)
            }
            Prim::Pad {
                axis,
                before,
                after,
            } => x.expect("arity checked").pad(*axis, *before, *after),
            Prim::Opaque(id) => Err(Error::UnregisteredPrimitive(format!("opaque#{id}"))),
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}

pub(crate) fn gelu<T: Scalar>(v: T) -> T {
    let half = T::lit(0.5);
    half * v * (T::one() + (v * T::lit(FRAC_1_SQRT_2)).erf())
}

/// `2/√π`, the derivative scale of `erf`.
pub(crate) const ERF_SCALE: f64 = 1.128_379_167_095_512_6;

/// `1/√(2π)`, the standard normal density at zero.
pub(crate) fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}
