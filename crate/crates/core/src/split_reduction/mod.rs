//! Split distributions: bin `i` is cut into `a_i` equal sub-bins, where
//! `a_i = 1 + (copies of i in a multiset S)`. Splitting keeps l1 distance
//! and chi-square divergence, and shrinks the l2 norm.

mod oracles;

use rand::Rng;

use crate::dist_core::{poisson, ExplicitDistribution, SampleOracle};
use crate::error::{invalid, Error, Result};

pub use oracles::{
    AxisGrouping, ProductSplit, ProductSplitOracle, RegroupOracle, SplitOracle, SwapOracle,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMap {
    a: Vec<u64>,
    offsets: Vec<usize>,
    n_split: usize,
}

impl SplitMap {
    /// Builds the map from subdivision counts, all of which must be positive.
    pub fn from_a(a: Vec<u64>) -> Result<Self> {
        if a.is_empty() {
            return invalid("split map over an empty domain");
        }
        if a.contains(&0) {
            return invalid("every bin needs at least one sub-bin");
        }
        let mut offsets = Vec::with_capacity(a.len());
        let mut acc = 0usize;
        for &ai in &a {
            offsets.push(acc);
            acc = acc
                .checked_add(ai as usize)
                .ok_or_else(|| Error::InvalidArgument("split domain overflows".into()))?;
        }
        Ok(Self {
            a,
            offsets,
            n_split: acc,
        })
    }

    /// `a_i = 1 + multiplicity[i]`.
    pub fn from_multiplicities(mult: &[u64]) -> Result<Self> {
        Self::from_a(mult.iter().map(|c| c + 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_a(vec![1; n]).expect("non-empty identity split")
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_split(&self) -> usize {
        self.n_split
    }

    pub fn a(&self) -> &[u64] {
        &self.a
    }

    /// `|S|`.
    pub fn multiset_size(&self) -> u64 {
        self.n_split as u64 - self.a.len() as u64
    }

    /// Flat index of sub-bin `j` (0-based) of bin `i`.
    pub fn flat(&self, i: usize, j: u64) -> usize {
        debug_assert!(j < self.a[i]);
        self.offsets[i] + j as usize
    }

    pub fn unflat(&self, flat: usize) -> (usize, u64) {
        assert!(flat < self.n_split, "flat index out of range");
        let i = self.offsets.partition_point(|&o| o <= flat) - 1;
        (i, (flat - self.offsets[i]) as u64)
    }

    /// Adds `extra[i]` more copies of each `i` to S.
    pub fn extended(&self, extra: &[u64]) -> Result<Self> {
        if extra.len() != self.n() {
            return Err(Error::DimensionMismatch(self.n(), extra.len()));
        }
        Self::from_a(self.a.iter().zip(extra).map(|(a, e)| a + e).collect())
    }

    /// Exact `||p_S||_2^2 = sum p_i^2 / a_i`.
    pub fn split_norm_sq(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.a).map(|(x, &a)| x * x / a as f64).sum()
    }
}

/// `a_i = 1 + floor(n q_i)`, so `n_split <= 2n`.
pub fn split_map_from_known(q: &ExplicitDistribution) -> SplitMap {
    let n = q.n() as f64;
    let mult: Vec<u64> = q.probs().iter().map(|&x| (n * x).floor() as u64).collect();
    SplitMap::from_multiplicities(&mult).expect("non-empty distribution")
}

/// S is a `Poi(k)`-sized sample from `q`.
pub fn split_map_from_samples<O, R>(q: &mut O, n: usize, k: f64, rng: &mut R) -> Result<SplitMap>
where
    O: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    if !(k > 0.0 && k.is_finite()) {
        return invalid(format!("split size parameter {k} must be positive"));
    }
    if q.domain_size() != n {
        return Err(Error::DimensionMismatch(n, q.domain_size()));
    }
    let draws = poisson(k, rng);
    let mut mult = vec![0u64; n];
    for _ in 0..draws {
        mult[q.next_sample()?] += 1;
    }
    SplitMap::from_multiplicities(&mult)
}

/// Maps a draw from p to a draw from p_S.
pub fn split_sample<R: Rng + ?Sized>(i: usize, sm: &SplitMap, rng: &mut R) -> usize {
    let a = sm.a[i];
    let j = if a == 1 { 0 } else { rng.random_range(0..a) };
    sm.flat(i, j)
}

/// Exact pmf of p_S. Validation only: testers never materialize it for unknown p.
pub fn split_explicit(p: &ExplicitDistribution, sm: &SplitMap) -> Result<ExplicitDistribution> {
    if p.n() != sm.n() {
        return Err(Error::DimensionMismatch(sm.n(), p.n()));
    }
    let mut out = Vec::with_capacity(sm.n_split());
    for (&x, &a) in p.probs().iter().zip(sm.a()) {
        let v = x / a as f64;
        out.extend(std::iter::repeat_n(v, a as usize));
    }
    ExplicitDistribution::new(out)
}
