//! Central finite differences on a raw, non-recording evaluation path.

use crate::error::{Error, Result};
use crate::nets::DeepONet;
use crate::scalar::Scalar;
use crate::strategies::{Field, MultiIndex};
use crate::tensor::Tensor;

/// Weights of the `order`-th derivative at 0 on the given offsets
/// (Fornberg's recursion).
pub fn fornberg_weights(order: usize, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    assert!(n > order, "need more than {order} points");
    // c[j][k]: weight of point j for derivative k
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Weights on the offsets `-k..=k` (in units of the step).
pub fn central_weights(order: usize, half_width: usize) -> Vec<f64> {
    let k = half_width as f64;
    let offsets: Vec<f64> = (0..=2 * half_width).map(|i| i as f64 - k).collect();
    fornberg_weights(order, &offsets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub h: f64,
    /// Stencil of `2·half_width + 1` points per differentiated dimension.
    pub half_width: usize,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            h: 0.05,
            half_width: 5,
        }
    }
}

/// `∂^α` of `eval` with respect to a uniform shift of every row of
/// `x[N×D]`, by a tensor-product central stencil.
pub fn fd_derivative<T: Scalar>(
    eval: &dyn Fn(&Tensor<T>) -> Result<Tensor<T>>,
    x: &Tensor<T>,
    index: &MultiIndex,
    cfg: FdConfig,
) -> Result<Tensor<T>> {
    let d = x.shape().dim(1)?;
    if index.dims() != d {
        return Err(Error::Config(format!(
            "multi-index {index} does not match D={d}"
        )));
    }
    if index.is_zero() {
        return eval(x);
    }
    let active: Vec<(usize, Vec<f64>)> = index
        .orders()
        .iter()
        .enumerate()
        .filter(|(_, &o)| o > 0)
        .map(|(k, &o)| {
            let w = central_weights(o, cfg.half_width.max(o.div_ceil(2)));
            let scale = cfg.h.powi(o as i32);
            (k, w.into_iter().map(|v| v / scale).collect())
        })
        .collect();
    let mut acc: Option<Tensor<T>> = None;
    let mut pos = vec![0usize; active.len()];
    loop {
        let mut weight = 1.0;
        let mut shifted = x.clone();
        for ((k, w), &s) in active.iter().zip(&pos) {
            weight *= w[s];
            let half = (w.len() / 2) as f64;
            let off = T::lit((s as f64 - half) * cfg.h);
            for row in shifted.data_mut().chunks_exact_mut(d) {
                row[*k] += off;
            }
        }
        if weight != 0.0 {
            let term = eval(&shifted)?.scale(T::lit(weight));
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
        let mut carry = true;
        for (slot, (_, w)) in pos.iter_mut().zip(&active) {
            *slot += 1;
            if *slot < w.len() {
                carry = false;
                break;
            }
            *slot = 0;
        }
        if carry {
            break;
        }
    }
    Ok(acc.expect("stencil has a nonzero weight"))
}

/// Finite-difference derivative field `M×N` of one network output channel.
pub fn fd_field<T: Scalar>(
    net: &DeepONet<T>,
    p: &Tensor<T>,
    x: &Tensor<T>,
    field: &Field,
    cfg: FdConfig,
) -> Result<Tensor<T>> {
    let (m, n) = (p.shape().dim(0)?, x.shape().dim(0)?);
    let c = net.spec.channels;
    let ch = field.channel;
    let eval = |xs: &Tensor<T>| -> Result<Tensor<T>> {
        let u = net.eval(p, xs)?;
        Ok(Tensor::from_fn([m, n], |k| u.data()[k * c + ch]))
    };
    fd_derivative(&eval, x, &field.index, cfg)
}

/// `max|a − b| / max|b|`, or the absolute difference when `b` vanishes.
pub fn rel_max_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max);
    let scale = b.max_abs().as_f64();
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
