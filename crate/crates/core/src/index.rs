//! Index sets over `{0, .., d-1}`.
//!
//! Internally indices are 0-based; on the wire (serde) they are 1-based, which
//! is how component numbers appear in every emitted JSON document.

use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A sorted, duplicate-free set of component indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        IndexSet(idx)
    }

    pub fn full(d: usize) -> Self {
        IndexSet((0..d).collect())
    }

    pub fn from_mask(mask: u64, d: usize) -> Self {
        IndexSet((0..d).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_superset_of(&self, other: &IndexSet) -> bool {
        other.0.iter().all(|&i| self.contains(i))
    }

    /// `{0..d} \ self`.
    pub fn complement(&self, d: usize) -> IndexSet {
        IndexSet((0..d).filter(|&i| !self.contains(i)).collect())
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::new(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    /// Picks the entries of `v` listed in this set.
    pub fn select(&self, v: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| v[i]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().map(|i| i + 1).join(","))
    }
}

impl Serialize for IndexSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|i| i + 1))
    }
}

impl<'de> Deserialize<'de> for IndexSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let one_based = Vec::<usize>::deserialize(d)?;
        if one_based.contains(&0) {
            return Err(serde::de::Error::custom("index sets are 1-based"));
        }
        Ok(IndexSet::new(one_based.into_iter().map(|i| i - 1).collect()))
    }
}

/// All `k`-subsets of `{0..d}` in lexicographic order.
pub fn k_subsets(d: usize, k: usize) -> Vec<IndexSet> {
    (0..d).combinations(k).map(IndexSet).collect()
}

/// Binomial coefficient as a float (exact for the sizes used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_lexicographic() {
        let s = k_subsets(4, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s[0].as_slice(), &[0, 1]);
        assert_eq!(s[5].as_slice(), &[2, 3]);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(20, 10), 184756.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn serde_is_one_based() {
        let s = IndexSet::new(vec![2, 0]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3]");
        let back: IndexSet = serde_json::from_str("[3,1]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<IndexSet>("[0]").is_err());
    }

    #[test]
    fn complement_and_union() {
        let s = IndexSet::new(vec![1]);
        assert_eq!(s.complement(3).as_slice(), &[0, 2]);
        assert_eq!(s.union(&IndexSet::new(vec![2])).as_slice(), &[1, 2]);
        assert_eq!(IndexSet::from_mask(0b101, 3).as_slice(), &[0, 2]);
    }
}
