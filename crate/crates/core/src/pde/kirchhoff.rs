use std::f64::consts::PI;

use crate::autograd::{concat, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::strategies::Operator;
use crate::tensor::Tensor;

fn check<T: Scalar>(c: &Tensor<T>, x: &Tensor<T>, modes: usize) -> Result<()> {
    if c.shape().rank() != 2 || c.dims()[1] != modes * modes {
        return Err(Error::dim(
            "sine coefficients",
            c.shape(),
            &[c.dims()[0], modes * modes].into(),
        ));
    }
    if x.shape().rank() != 2 || x.dims()[1] != 2 {
        return Err(Error::dim(
            "plate points",
            x.shape(),
            &[x.dims()[0], 2].into(),
        ));
    }
    Ok(())
}

/// `Σ_rs w(r,s)·c_rs·sin(rπx)·sin(sπy)` for every row of `c` and point of `x`.
fn sine_series<T: Scalar>(
    c: &Tensor<T>,
    x: &Tensor<T>,
    modes: usize,
    w: impl Fn(usize, usize) -> f64,
) -> Result<Tensor<T>> {
    check(c, x, modes)?;
    let n = x.dims()[0];
    let q = modes * modes;
    let mut basis = Vec::with_capacity(n * q);
    for pt in x.data().chunks(2) {
        let (px, py) = (pt[0].as_f64(), pt[1].as_f64());
        for r in 1..=modes {
            for s in 1..=modes {
                basis.push(T::lit(
                    w(r, s) * (r as f64 * PI * px).sin() * (s as f64 * PI * py).sin(),
                ));
            }
        }
    }
    c.matmul(&Tensor::from_vec([n, q], basis)?.transpose()?)
}

/// The load `q(x, y)`, `M×N`.
pub fn kirchhoff_load<T: Scalar>(c: &Tensor<T>, x: &Tensor<T>, modes: usize) -> Result<Tensor<T>> {
    sine_series(c, x, modes, |_, _| 1.0)
}

/// Closed-form plate deflection for the sine-series load, `M×N`.
pub fn kirchhoff_analytic<T: Scalar>(
    c: &Tensor<T>,
    x: &Tensor<T>,
    modes: usize,
    rigidity: f64,
) -> Result<Tensor<T>> {
    sine_series(c, x, modes, |r, s| mode_gain(r, s, rigidity))
}

fn mode_gain(r: usize, s: usize, rigidity: f64) -> f64 {
    let k = (r * r + s * s) as f64;
    1.0 / (rigidity * PI.powi(4) * k * k)
}

/// The closed-form deflection recorded from `sin` and `mul` primitives,
/// usable wherever a network is expected.
pub struct KirchhoffAnalytic<'g, T> {
    graph: &'g Graph<T>,
    modes: usize,
    rigidity: f64,
}

impl<'g, T: Scalar> KirchhoffAnalytic<'g, T> {
    pub fn new(graph: &'g Graph<T>, modes: usize, rigidity: f64) -> Self {
        KirchhoffAnalytic {
            graph,
            modes,
            rigidity,
        }
    }

    /// `K × R·S` basis functions at the points.
    fn basis(&self, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let rows = x.shape().dim(0)?;
        let (px, py) = (x.column(0)?, x.column(1)?);
        let mut cols = Vec::with_capacity(self.modes * self.modes);
        for r in 1..=self.modes {
            let sx = px.scale(r as f64 * PI)?.sin()?;
            for s in 1..=self.modes {
                let sy = py.scale(s as f64 * PI)?.sin()?;
                cols.push(
                    sx.mul(sy)?
                        .scale(mode_gain(r, s, self.rigidity))?
                        .reshape([rows, 1])?,
                );
            }
        }
        if cols.len() == 1 {
            Ok(cols[0])
        } else {
            concat(&cols, 1)
        }
    }
}

impl<'g, T: Scalar> Operator<'g, T> for KirchhoffAnalytic<'g, T> {
    fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    fn dims(&self) -> usize {
        2
    }

    fn channels(&self) -> usize {
        1
    }

    fn forward_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        Ok(vec![p.matmul(self.basis(x)?.t()?)?])
    }

    fn forward_pointwise_channels(&self, p: Var<'g, T>, x: Var<'g, T>) -> Result<Vec<Var<'g, T>>> {
        Ok(vec![p.mul(self.basis(x)?)?.sum(&[1])?])
    }
}
