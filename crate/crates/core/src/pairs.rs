//! Unordered node pairs and dense tables indexed by them.
//!
//! Pairs are stored normalized (`lo < hi`) and enumerated in row-major
//! upper-triangular order: `{0,1}, {0,2}, …, {0,n-1}, {1,2}, …`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    lo: usize,
    hi: usize,
}

impl Pair {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::invalid(format!("pair endpoints must differ (got {a},{a})")));
        }
        Ok(Self {
            lo: a.min(b),
            hi: a.max(b),
        })
    }

    pub fn lo(self) -> usize {
        self.lo
    }

    pub fn hi(self) -> usize {
        self.hi
    }

    pub fn contains(self, node: usize) -> bool {
        self.lo == node || self.hi == node
    }

    /// The endpoint that is not `node`, if `node` is an endpoint.
    pub fn other(self, node: usize) -> Option<usize> {
        if node == self.lo {
            Some(self.hi)
        } else if node == self.hi {
            Some(self.lo)
        } else {
            None
        }
    }

    /// Position of the pair in upper-triangular order for `n` nodes.
    pub fn index(self, n: usize) -> usize {
        let (i, j) = (self.lo, self.hi);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn from_index(index: usize, n: usize) -> Self {
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = n - i - 1;
            if index < start + row {
                return Self {
                    lo: i,
                    hi: i + 1 + (index - start),
                };
            }
            start += row;
            i += 1;
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo, self.hi)
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Every unordered pair over `n` nodes, in index order.
pub fn all_pairs(n: usize) -> impl Iterator<Item = Pair> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| Pair { lo: i, hi: j }))
}

/// A value for every unordered pair of an `n`-node network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Clone> PairTable<T> {
    pub fn filled(n: usize, value: T) -> Self {
        Self {
            n,
            values: vec![value; pair_count(n)],
        }
    }
}

impl<T> PairTable<T> {
    pub fn from_values(n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != pair_count(n) {
            return Err(Error::Dimension {
                expected: pair_count(n),
                actual: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, pair: Pair) -> &T {
        &self.values[pair.index(self.n)]
    }

    pub fn get_mut(&mut self, pair: Pair) -> &mut T {
        let n = self.n;
        &mut self.values[pair.index(n)]
    }

    pub fn set(&mut self, pair: Pair, value: T) {
        *self.get_mut(pair) = value;
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, &T)> {
        all_pairs(self.n).zip(self.values.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for n in 2..12 {
            for (k, p) in all_pairs(n).enumerate() {
                assert_eq!(p.index(n), k);
                assert_eq!(Pair::from_index(k, n), p);
            }
            assert_eq!(all_pairs(n).count(), pair_count(n));
        }
    }

    #[test]
    fn pair_is_unordered() {
        assert_eq!(Pair::new(3, 1).unwrap(), Pair::new(1, 3).unwrap());
        assert!(Pair::new(2, 2).is_err());
        let p = Pair::new(4, 2).unwrap();
        assert_eq!(p.other(2), Some(4));
        assert_eq!(p.other(3), None);
    }
}
