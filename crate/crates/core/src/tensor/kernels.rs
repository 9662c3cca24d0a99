use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Mean,
}

/// Odometer over a row-major index space, tracking two strided offsets.
struct Odometer {
    dims: Vec<usize>,
    counter: Vec<usize>,
    strides: [Vec<usize>; 2],
    offsets: [usize; 2],
}

impl Odometer {
    fn new(dims: &[usize], sa: Vec<usize>, sb: Vec<usize>) -> Self {
        Odometer {
            dims: dims.to_vec(),
            counter: vec![0; dims.len()],
            strides: [sa, sb],
            offsets: [0, 0],
        }
    }

    fn advance(&mut self) {
        for k in (0..self.dims.len()).rev() {
            self.counter[k] += 1;
            self.offsets[0] += self.strides[0][k];
            self.offsets[1] += self.strides[1][k];
            if self.counter[k] < self.dims[k] {
                return;
            }
            self.offsets[0] -= self.strides[0][k] * self.dims[k];
            self.offsets[1] -= self.strides[1][k] * self.dims[k];
            self.counter[k] = 0;
        }
    }
}

fn zip_broadcast<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    out: &Shape,
    f: impl Fn(T, T) -> T,
) -> Vec<T> {
    let n = out.numel();
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        return ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
    }
    if a.shape() == out {
        if bd.len() == 1 {
            let y = bd[0];
            return ad.iter().map(|&x| f(x, y)).collect();
        }
        if is_trailing_block(b.shape(), out) {
            let m = bd.len();
            return ad
                .chunks_exact(m)
                .flat_map(|row| row.iter().zip(bd).map(|(&x, &y)| f(x, y)))
                .collect();
        }
    }
    if b.shape() == out {
        if ad.len() == 1 {
            let x = ad[0];
            return bd.iter().map(|&y| f(x, y)).collect();
        }
        if is_trailing_block(a.shape(), out) {
            let m = ad.len();
            return bd
                .chunks_exact(m)
                .flat_map(|row| ad.iter().zip(row).map(|(&x, &y)| f(x, y)))
                .collect();
        }
    }
    let mut od = Odometer::new(
        out.dims(),
        a.shape().broadcast_strides(out),
        b.shape().broadcast_strides(out),
    );
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f(ad[od.offsets[0]], bd[od.offsets[1]]));
        od.advance();
    }
    data
}

/// True when `small` (ignoring leading ones) equals a trailing block of `out`,
/// so it repeats contiguously across `out`.
fn is_trailing_block(small: &Shape, out: &Shape) -> bool {
    let dims = small.dims();
    let lead = dims.iter().take_while(|&&d| d == 1).count();
    let core = &dims[lead..];
    let od = out.dims();
    core.len() <= od.len() && od[od.len() - core.len()..] == *core && !core.is_empty()
}

impl<T: Scalar> Tensor<T> {
    /// Elementwise binary operation under trailing-aligned broadcasting.
    /// Division by zero follows IEEE semantics.
    pub fn binary(&self, op: BinaryOp, other: &Self) -> Result<Self> {
        let out = Shape::broadcast(self.shape(), other.shape())?;
        let data = match op {
            BinaryOp::Add => zip_broadcast(self, other, &out, |x, y| x + y),
            BinaryOp::Sub => zip_broadcast(self, other, &out, |x, y| x - y),
            BinaryOp::Mul => zip_broadcast(self, other, &out, |x, y| x * y),
            BinaryOp::Div => zip_broadcast(self, other, &out, |x, y| x / y),
            BinaryOp::Pow => zip_broadcast(self, other, &out, |x, y| x.powf(y)),
        };
        Tensor::from_vec(out, data)
    }

    /// Reduction over `axes` (duplicates ignored, any order). The reduced axes
    /// are removed; reducing every axis yields a rank-0 tensor. Each output
    /// accumulates its inputs in increasing row-major order.
    pub fn reduce(&self, op: ReduceOp, axes: &[usize]) -> Result<Self> {
        let rank = self.shape().rank();
        let mut mask = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::Axis { axis: a, rank });
            }
            mask[a] = true;
        }
        let kept: Vec<usize> = (0..rank)
            .filter(|&k| !mask[k])
            .map(|k| self.dims()[k])
            .collect();
        let count: usize = (0..rank)
            .filter(|&k| mask[k])
            .map(|k| self.dims()[k])
            .product();
        let mut out = vec![T::zero(); kept.iter().product()];
        let data = self.data();

        let split = mask.iter().position(|&m| m);
        let all_from_split = split.is_some_and(|s| mask[s..].iter().all(|&m| m));
        let all_to_split = mask.iter().take_while(|&&m| m).count();
        let is_prefix = all_to_split > 0 && mask[all_to_split..].iter().all(|&m| !m);

        if split.is_none() {
            out.copy_from_slice(data);
        } else if all_from_split {
            // trailing axes: contiguous chunks
            let chunk = count;
            for (o, c) in out.iter_mut().zip(data.chunks_exact(chunk.max(1))) {
                let mut acc = T::zero();
                for &v in c {
                    acc += v;
                }
                *o = acc;
            }
        } else if is_prefix {
            let m = out.len();
            for row in data.chunks_exact(m.max(1)) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
        } else {
            let out_shape = Shape::new(kept.clone());
            let out_strides = out_shape.strides();
            let mut strides = vec![0; rank];
            let mut j = 0;
            for k in 0..rank {
                if !mask[k] {
                    strides[k] = out_strides[j];
                    j += 1;
                }
            }
            let mut od = Odometer::new(self.dims(), strides, vec![0; rank]);
            for &v in data {
                out[od.offsets[0]] += v;
                od.advance();
            }
        }
        if op == ReduceOp::Mean && count > 0 {
            let inv = T::one() / T::lit(count as f64);
            for o in &mut out {
                *o *= inv;
            }
        }
        Tensor::from_vec(kept, out)
    }

    /// Sums away the axes along which `target` was broadcast to reach this
    /// tensor's shape (inverse of [`Tensor::broadcast_to`]).
    pub fn sum_to(&self, target: &Shape) -> Result<Self> {
        if self.shape() == target {
            return Ok(self.clone());
        }
        if Shape::broadcast(target, self.shape())? != *self.shape() {
            return Err(Error::dim("sum_to", self.shape(), target));
        }
        let rank = self.shape().rank();
        let axes: Vec<usize> = (0..rank)
            .filter(|&k| target.padded_dim(rank, k) == 1 && self.dims()[k] != 1)
            .chain((0..rank - target.rank()).filter(|&k| self.dims()[k] == 1))
            .collect();
        self.sum(&axes)?.reshape(target.clone())
    }

    /// Materialized broadcast to `target`.
    pub fn broadcast_to(&self, target: &Shape) -> Result<Self> {
        if self.shape() == target {
            return Ok(self.clone());
        }
        if Shape::broadcast(self.shape(), target)? != *target {
            return Err(Error::dim("broadcast_to", self.shape(), target));
        }
        let zeros = Tensor::zeros(target.clone());
        self.add(&zeros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: impl Into<Shape>, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn add_scalar_zero_is_identity() {
        let a = t([2, 3], &[1.0, -2.0, 3.5, 4.0, 0.0, 6.0]);
        assert_eq!(a.add(&Tensor::scalar(0.0)).unwrap(), a);
    }

    #[test]
    fn outer_product_by_broadcast() {
        let a = t([2, 1], &[2.0, 3.0]);
        let b = t([1, 3], &[1.0, 2.0, 3.0]);
        let c = a.mul(&b).unwrap();
        assert_eq!(c.dims(), &[2, 3]);
        assert_eq!(c.data(), &[2.0, 4.0, 6.0, 3.0, 6.0, 9.0]);
    }

    #[test]
    fn incompatible_broadcast_errors() {
        let a = Tensor::<f64>::zeros([2, 3]);
        let b = Tensor::<f64>::zeros([2]);
        assert!(matches!(a.add(&b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn division_by_zero_propagates() {
        let a = t([2], &[1.0, 0.0]);
        let z = Tensor::scalar(0.0);
        let q = a.div(&z).unwrap();
        assert!(q.data()[0].is_infinite());
        assert!(q.data()[1].is_nan());
    }

    #[test]
    fn sum_all_ones() {
        let a = Tensor::<f64>::ones([3, 4]);
        let s = a.sum(&[0, 1]).unwrap();
        assert_eq!(s.shape(), &Shape::scalar());
        assert_eq!(s.item(), Some(12.0));
    }

    #[test]
    fn mean_of_scalar_over_no_axes() {
        let c = Tensor::scalar(2.5);
        assert_eq!(c.mean(&[]).unwrap().item(), Some(2.5));
    }

    #[test]
    fn reduce_axis_out_of_range() {
        let a = Tensor::<f64>::ones([3, 4]);
        assert!(matches!(a.sum(&[2]), Err(Error::Axis { axis: 2, rank: 2 })));
    }

    #[test]
    fn middle_axis_reduction() {
        let a = Tensor::<f64>::from_fn([2, 3, 2], |i| i as f64);
        let s = a.sum(&[1]).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        assert_eq!(s.data(), &[6.0, 9.0, 24.0, 27.0]);
        let m = a.mean(&[0, 2]).unwrap();
        assert_eq!(m.data(), &[3.5, 5.5, 7.5]);
    }

    #[test]
    fn sum_to_inverts_broadcast() {
        let g = Tensor::<f64>::ones([4, 3]);
        assert_eq!(g.sum_to(&[3].into()).unwrap().data(), &[4.0; 3]);
        assert_eq!(g.sum_to(&[4, 1].into()).unwrap().data(), &[3.0; 4]);
        assert_eq!(g.sum_to(&Shape::scalar()).unwrap().item(), Some(12.0));
        let b = t([3], &[1.0, 2.0, 3.0])
            .broadcast_to(&[2, 3].into())
            .unwrap();
        assert_eq!(b.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }
}
