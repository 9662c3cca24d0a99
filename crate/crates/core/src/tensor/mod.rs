//! Dense row-major tensors and the raw kernels the autograd tape records.
//!
//! Storage is a flat `Vec` with no strides or views: transposes, slices and
//! broadcasts always materialize. Every reduction and matrix product
//! accumulates in a fixed left-to-right order, so results are bit-identical
//! across runs for a fixed build.

mod kernels;
mod shape;

pub use kernels::{BinaryOp, ReduceOp};
pub use shape::Shape;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(Error::DataLength {
                len: data.len(),
                expected: shape.numel(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: impl Into<Shape>, value: T) -> Self {
        let shape = shape.into();
        let data = vec![value; shape.numel()];
        Tensor { shape, data }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel()).map(&mut f).collect();
        Tensor { shape, data }
    }

    /// One-hot tensor with a single `1` at flat position `index`.
    pub fn unit(shape: impl Into<Shape>, index: usize) -> Self {
        let mut t = Self::zeros(shape);
        t.data[index] = T::one();
        t
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size in bytes of the payload.
    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        if index.len() != self.shape.rank() {
            return None;
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(self.dims()) {
            if i >= d {
                return None;
            }
            flat = flat * d + i;
        }
        self.data.get(flat).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != self.numel() {
            return Err(Error::dim("reshape", &self.shape, &shape));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.binary(BinaryOp::Div, other)
    }

    pub fn pow(&self, other: &Self) -> Result<Self> {
        self.binary(BinaryOp::Pow, other)
    }

    pub fn sum(&self, axes: &[usize]) -> Result<Self> {
        self.reduce(ReduceOp::Sum, axes)
    }

    pub fn mean(&self, axes: &[usize]) -> Result<Self> {
        self.reduce(ReduceOp::Mean, axes)
    }

    pub fn sum_all(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    pub fn all_axes(&self) -> Vec<usize> {
        (0..self.shape.rank()).collect()
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Self> {
        let [r, c] = self.matrix_dims("transpose")?;
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                data.push(self.data[i * c + j]);
            }
        }
        Ok(Tensor {
            shape: Shape::from([c, r]),
            data,
        })
    }

    /// Matrix product `[R×K]·[K×C]`. Each output element accumulates over
    /// `k` in ascending order starting from zero.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let [r, k] = self.matrix_dims("matmul")?;
        let [k2, c] = other.matrix_dims("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![T::zero(); r * c];
        let a = &self.data;
        let b = &other.data;
        // 4×8 register tiles; every element still sums over `k` in order
        const TR: usize = 4;
        const TC: usize = 8;
        let full_c = c - c % TC;
        let mut i = 0;
        while i + TR <= r {
            let rows: [&[T]; TR] = std::array::from_fn(|t| &a[(i + t) * k..(i + t + 1) * k]);
            for j in (0..full_c).step_by(TC) {
                let mut acc = [[T::zero(); TC]; TR];
                for (kk, brow) in b.chunks_exact(c).enumerate() {
                    let bv: [T; TC] = brow[j..j + TC].try_into().unwrap();
                    let xs: [T; TR] = std::array::from_fn(|t| rows[t][kk]);
                    for (row, x) in acc.iter_mut().zip(xs) {
                        for (o, y) in row.iter_mut().zip(bv) {
                            *o += x * y;
                        }
                    }
                }
                for (t, row) in acc.iter().enumerate() {
                    out[(i + t) * c + j..(i + t) * c + j + TC].copy_from_slice(row);
                }
            }
            i += TR;
        }
        for ii in 0..r {
            let j0 = if ii < i { full_c } else { 0 };
            if j0 == c {
                continue;
            }
            let row = &mut out[ii * c + j0..(ii + 1) * c];
            for kk in 0..k {
                let x = a[ii * k + kk];
                for (o, &y) in row.iter_mut().zip(&b[kk * c + j0..(kk + 1) * c]) {
                    *o += x * y;
                }
            }
        }
        Ok(Tensor {
            shape: Shape::from([r, c]),
            data: out,
        })
    }

    fn matrix_dims(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.dims() {
            &[r, c] => Ok([r, c]),
            _ => Err(Error::dim(op, &self.shape, &Shape::from([0, 0]))),
        }
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
        let rank = first.shape.rank();
        if axis >= rank {
            return Err(Error::Axis { axis, rank });
        }
        let mut dims = first.dims().to_vec();
        dims[axis] = 0;
        for p in parts {
            let ok = p.shape.rank() == rank
                && p.dims()
                    .iter()
                    .zip(first.dims())
                    .enumerate()
                    .all(|(k, (a, b))| k == axis || a == b);
            if !ok {
                return Err(Error::dim("concat", &first.shape, &p.shape));
            }
            dims[axis] += p.dims()[axis];
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let shape = Shape::new(dims);
        let mut data = Vec::with_capacity(shape.numel());
        for o in 0..outer {
            for p in parts {
                let chunk = p.dims()[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Sub-range `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Self> {
        let rank = self.shape.rank();
        if axis >= rank {
            return Err(Error::Axis { axis, rank });
        }
        let extent = self.dims()[axis];
        if start > end || end > extent {
            let mut want = self.dims().to_vec();
            want[axis] = end;
            return Err(Error::dim("slice", &self.shape, &Shape::new(want)));
        }
        let outer: usize = self.dims()[..axis].iter().product();
        let inner: usize = self.dims()[axis + 1..].iter().product();
        let mut dims = self.dims().to_vec();
        dims[axis] = end - start;
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            data.extend_from_slice(&self.data[base + start * inner..base + end * inner]);
        }
        Ok(Tensor {
            shape: Shape::new(dims),
            data,
        })
    }

    /// Zero padding along `axis`.
    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Result<Self> {
        let rank = self.shape.rank();
        if axis >= rank {
            return Err(Error::Axis { axis, rank });
        }
        let extent = self.dims()[axis];
        let outer: usize = self.dims()[..axis].iter().product();
        let inner: usize = self.dims()[axis + 1..].iter().product();
        let mut dims = self.dims().to_vec();
        dims[axis] = before + extent + after;
        let mut data = Vec::with_capacity(outer * dims[axis] * inner);
        for o in 0..outer {
            data.extend(std::iter::repeat(T::zero()).take(before * inner));
            data.extend_from_slice(&self.data[o * extent * inner..(o + 1) * extent * inner]);
            data.extend(std::iter::repeat(T::zero()).take(after * inner));
        }
        Ok(Tensor {
            shape: Shape::new(dims),
            data,
        })
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: impl Into<Shape>, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let eye = t([2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t([2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(eye.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_row_by_column() {
        let a = t([1, 2], &[1.0, 2.0]);
        let b = t([2, 1], &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_naive_sum_bitwise() {
        for (r, k, c) in [(7, 5, 3), (9, 6, 19), (4, 1, 8), (1, 3, 17)] {
            let a: Vec<f64> = (0..r * k).map(|v| (v as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * c).map(|v| (v as f64 * 1.3).cos()).collect();
            let got = t([r, k], &a).matmul(&t([k, c], &b)).unwrap();
            for i in 0..r {
                for j in 0..c {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        acc += a[i * k + kk] * b[kk * c + j];
                    }
                    assert_eq!(got.data()[i * c + j].to_bits(), acc.to_bits());
                }
            }
        }
        assert_eq!(
            t([4, 0], &[]).matmul(&t([0, 2], &[])).unwrap(),
            Tensor::zeros([4, 2])
        );
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f64>::zeros([2, 3]);
        let b = Tensor::<f64>::zeros([2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2×3] vs [2×3]"), "{msg}");
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec([2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn concat_slice_pad() {
        let a = t([2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t([2, 1], &[5.0, 6.0]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        assert_eq!(c.slice(1, 2, 3).unwrap(), b);
        let p = b.pad(1, 2, 0).unwrap();
        assert_eq!(p.data(), &[0.0, 0.0, 5.0, 0.0, 0.0, 6.0]);
        let rows = Tensor::concat(&[&a, &a], 0).unwrap();
        assert_eq!(rows.dims(), &[4, 2]);
        assert_eq!(rows.slice(0, 2, 4).unwrap(), a);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let a = t([2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let at = a.transpose().unwrap();
        assert_eq!(at.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(at.transpose().unwrap(), a);
    }

    #[test]
    fn get_indexes_row_major() {
        let a = t([2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.get(&[1, 0]), Some(4.0));
        assert_eq!(a.get(&[2, 0]), None);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn matrix(max: usize) -> impl Strategy<Value = Tensor<f64>> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-2.0..2.0f64, r * c)
                .prop_map(move |v| Tensor::from_vec([r, c], v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn broadcast_row_matches_explicit_tiling(a in matrix(12), seed in any::<u64>()) {
            let c = a.dims()[1];
            let row = Tensor::from_fn([c], |j| ((seed >> (j % 64)) & 7) as f64 - 3.5);
            let tiled = row.broadcast_to(a.shape()).unwrap();
            for (x, y) in [(a.add(&row), a.add(&tiled)), (a.mul(&row), a.mul(&tiled)), (a.sub(&row), a.sub(&tiled))] {
                let (x, y) = (x.unwrap(), y.unwrap());
                prop_assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }

        #[test]
        fn matmul_transpose_identity(a in matrix(16), cols in 1usize..16, seed in any::<u64>()) {
            let k = a.dims()[1];
            let b = Tensor::from_fn([k, cols], |i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 250.0 - 2.0);
            let left = a.matmul(&b).unwrap().transpose().unwrap();
            let right = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
            let scale = left.max_abs().max(1e-300);
            let worst = left.data().iter().zip(right.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            prop_assert!(worst / scale <= 1e-12);
        }

        #[test]
        fn kernels_are_pure(a in matrix(10)) {
            let b = a.map(|v| v * 0.5 + 1.0);
            prop_assert_eq!(a.matmul(&b.transpose().unwrap()).unwrap(), a.matmul(&b.transpose().unwrap()).unwrap());
            prop_assert_eq!(a.sum(&[0]).unwrap(), a.sum(&[0]).unwrap());
        }
    }
}
