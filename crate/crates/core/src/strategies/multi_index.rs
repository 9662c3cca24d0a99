use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Per-dimension derivative orders, e.g. `(2,0)` for ∂²/∂x².
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(orders: impl Into<Vec<usize>>) -> Self {
        MultiIndex(orders.into())
    }

    pub fn zero(dims: usize) -> Self {
        MultiIndex(vec![0; dims])
    }

    /// Order one in dimension `k`.
    pub fn unit(dims: usize, k: usize) -> Self {
        let mut v = vec![0; dims];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn orders(&self) -> &[usize] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.order() == 0
    }

    /// The index this one is computed from by differentiating once more,
    /// together with that dimension: the last nonzero dimension is peeled
    /// off, so nesting always runs in ascending dimension order.
    pub fn parent(&self) -> Option<(MultiIndex, usize)> {
        let k = self.0.iter().rposition(|&o| o > 0)?;
        let mut v = self.0.clone();
        v[k] -= 1;
        Some((MultiIndex(v), k))
    }

    pub fn with_added(&self, k: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[k] += 1;
        MultiIndex(v)
    }

    /// All indices of `dims` dimensions with total order ≤ `max_order`,
    /// sorted by total order, then lexicographically.
    pub fn all_up_to(dims: usize, max_order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0; dims];
        fn rec(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if k == cur.len() {
                out.push(MultiIndex(cur.clone()));
                return;
            }
            for o in 0..=left {
                cur[k] = o;
                rec(k + 1, left - o, cur, out);
            }
            cur[k] = 0;
        }
        rec(0, max_order, &mut cur, &mut out);
        out.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, o) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    /// Parses `(2,0)` or `2,0`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let orders = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad multi-index `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiIndex(orders))
    }
}

impl<const N: usize> From<[usize; N]> for MultiIndex {
    fn from(v: [usize; N]) -> Self {
        MultiIndex(v.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_peels_last_dimension() {
        let (p, k) = MultiIndex::from([1, 1]).parent().unwrap();
        assert_eq!((p, k), (MultiIndex::from([1, 0]), 1));
        let (p, k) = MultiIndex::from([2, 0]).parent().unwrap();
        assert_eq!((p, k), (MultiIndex::from([1, 0]), 0));
        assert!(MultiIndex::zero(2).parent().is_none());
    }

    #[test]
    fn enumeration_counts() {
        // C(P + D, D) indices of total order ≤ P
        assert_eq!(MultiIndex::all_up_to(1, 4).len(), 5);
        assert_eq!(MultiIndex::all_up_to(2, 4).len(), 15);
        assert_eq!(MultiIndex::all_up_to(2, 0), vec![MultiIndex::zero(2)]);
        let all = MultiIndex::all_up_to(2, 3);
        assert!(all.windows(2).all(|w| w[0].order() <= w[1].order()));
    }

    #[test]
    fn display_and_parse() {
        let m = MultiIndex::from([2, 0]);
        assert_eq!(m.to_string(), "(2,0)");
        assert_eq!("(2,0)".parse::<MultiIndex>().unwrap(), m);
        assert_eq!(
            " 0, 3".parse::<MultiIndex>().unwrap(),
            MultiIndex::from([0, 3])
        );
        assert!("(a,1)".parse::<MultiIndex>().is_err());
    }
}
