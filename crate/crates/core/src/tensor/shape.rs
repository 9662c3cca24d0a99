use std::fmt;

use crate::error::{Error, Result};

/// Ordered list of extents. Rank 0 is a scalar with one element.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        Shape(dims.into())
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self, axis: usize) -> Result<usize> {
        self.0.get(axis).copied().ok_or(Error::Axis {
            axis,
            rank: self.rank(),
        })
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.rank()];
        for i in (0..self.rank().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Trailing-aligned broadcast of two shapes.
    pub fn broadcast(a: &Shape, b: &Shape) -> Result<Shape> {
        let rank = a.rank().max(b.rank());
        let mut out = vec![0; rank];
        for (k, slot) in out.iter_mut().enumerate() {
            let da = a.padded_dim(rank, k);
            let db = b.padded_dim(rank, k);
            *slot = match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => return Err(Error::dim("broadcast", a, b)),
            };
        }
        Ok(Shape(out))
    }

    /// Extent at position `k` after left-padding with ones to `rank`.
    pub(crate) fn padded_dim(&self, rank: usize, k: usize) -> usize {
        let offset = rank - self.rank();
        if k < offset {
            1
        } else {
            self.0[k - offset]
        }
    }

    /// Strides of `self` viewed at the broadcast shape `out`; broadcast axes get stride 0.
    pub(crate) fn broadcast_strides(&self, out: &Shape) -> Vec<usize> {
        let rank = out.rank();
        let own = self.strides();
        let offset = rank - self.rank();
        (0..rank)
            .map(|k| {
                if k < offset || self.0[k - offset] == 1 {
                    0
                } else {
                    own[k - offset]
                }
            })
            .collect()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

impl From<Vec<usize>> for Shape {
    fn from(v: Vec<usize>) -> Self {
        Shape(v)
    }
}

impl From<&[usize]> for Shape {
    fn from(v: &[usize]) -> Self {
        Shape(v.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(v: [usize; N]) -> Self {
        Shape(v.to_vec())
    }
}

impl From<&Shape> for Shape {
    fn from(s: &Shape) -> Self {
        s.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_has_one_element() {
        assert_eq!(Shape::scalar().numel(), 1);
        assert_eq!(Shape::scalar().rank(), 0);
        assert_eq!(Shape::from([3, 0, 2]).numel(), 0);
    }

    #[test]
    fn broadcast_rules() {
        let s = Shape::broadcast(&[2, 1].into(), &[1, 3].into()).unwrap();
        assert_eq!(s.dims(), &[2, 3]);
        let s = Shape::broadcast(&[4, 5].into(), &Shape::scalar()).unwrap();
        assert_eq!(s.dims(), &[4, 5]);
        let s = Shape::broadcast(&[4, 5].into(), &[5].into()).unwrap();
        assert_eq!(s.dims(), &[4, 5]);
        assert!(Shape::broadcast(&[4, 5].into(), &[4].into()).is_err());
    }

    #[test]
    fn strides_row_major() {
        assert_eq!(Shape::from([2, 3, 4]).strides(), vec![12, 4, 1]);
        assert_eq!(
            Shape::from([3]).broadcast_strides(&[2, 3].into()),
            vec![0, 1]
        );
    }
}
