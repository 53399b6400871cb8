use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};

use super::sampling::AliasTable;

const SUM_TOLERANCE: f64 = 1e-12;

/// Anything that is a non-negative mass vector over `[n]`.
pub trait MassVector {
    fn masses(&self) -> &[f64];

    fn len(&self) -> usize {
        self.masses().len()
    }

    fn is_empty(&self) -> bool {
        self.masses().is_empty()
    }
}

/// A probability vector over `[n]`, 0-based internally.
#[derive(Debug, Clone)]
pub struct ExplicitDistribution {
    probs: Vec<f64>,
    alias: OnceLock<AliasTable>,
}

impl ExplicitDistribution {
    /// Validates and, when the sum is off by more than 1e-12, normalizes.
    /// Sums outside `[0.5, 2]` are rejected as almost certainly a bug.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty distribution");
        }
        if let Some(bad) = probs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!(
                "probability {bad} is not a finite non-negative number"
            ));
        }
        let sum: f64 = probs.iter().sum();
        if !(0.5..=2.0).contains(&sum) {
            return invalid(format!("probabilities sum to {sum}"));
        }
        let probs = if (sum - 1.0).abs() > SUM_TOLERANCE {
            probs.into_iter().map(|x| x / sum).collect()
        } else {
            probs
        };
        Ok(Self {
            probs,
            alias: OnceLock::new(),
        })
    }

    /// Normalizes arbitrary non-negative weights with a positive sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return invalid("weights must have a positive finite sum");
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over an empty domain");
        Self {
            probs: vec![1.0 / n as f64; n],
            alias: OnceLock::new(),
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass outside the domain");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self {
            probs,
            alias: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub(crate) fn alias_table(&self) -> &AliasTable {
        self.alias.get_or_init(|| AliasTable::new(&self.probs))
    }

    pub fn to_pseudo(&self) -> PseudoDistribution {
        PseudoDistribution::new(self.probs.clone()).expect("valid distribution")
    }
}

impl MassVector for ExplicitDistribution {
    fn masses(&self) -> &[f64] {
        &self.probs
    }
}

impl PartialEq for ExplicitDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

/// A non-negative measure with no normalization constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDistribution {
    mass: Vec<f64>,
    total: f64,
}

impl PseudoDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if let Some(bad) = mass.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!("mass {bad} is not a finite non-negative number"));
        }
        let total = mass.iter().sum();
        Ok(Self { mass, total })
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.mass.iter().map(|x| x * c).collect())
    }

    pub fn normalized(&self) -> Result<ExplicitDistribution> {
        ExplicitDistribution::from_weights(&self.mass)
    }
}

impl MassVector for PseudoDistribution {
    fn masses(&self) -> &[f64] {
        &self.mass
    }
}

impl From<ExplicitDistribution> for PseudoDistribution {
    fn from(d: ExplicitDistribution) -> Self {
        let mass = d.into_probs();
        let total = mass.iter().sum();
        Self { mass, total }
    }
}

/// A distribution over `[n_1] x ... x [n_d]`, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    dims: Vec<usize>,
    dist: ExplicitDistribution,
}

impl JointDistribution {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return invalid("joint dimensions must be non-empty and positive");
        }
        let size: usize = dims.iter().product();
        if size != probs.len() {
            return Err(Error::DimensionMismatch(size, probs.len()));
        }
        Ok(Self {
            dims,
            dist: ExplicitDistribution::new(probs)?,
        })
    }

    pub fn from_flat(dims: Vec<usize>, dist: ExplicitDistribution) -> Result<Self> {
        let size: usize = dims.iter().product();
        if size != dist.n() {
            return Err(Error::DimensionMismatch(size, dist.n()));
        }
        Ok(Self { dims, dist })
    }

    /// Product of independent marginals, in axis order.
    pub fn product(marginals: &[&ExplicitDistribution]) -> Self {
        let mut probs = vec![1.0];
        for m in marginals {
            probs = probs
                .iter()
                .flat_map(|a| m.probs().iter().map(move |b| a * b))
                .collect();
        }
        let dims = marginals.iter().map(|m| m.n()).collect();
        Self {
            dims,
            dist: ExplicitDistribution::new(probs).expect("product of distributions"),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn flat(&self) -> &ExplicitDistribution {
        &self.dist
    }

    pub fn into_flat(self) -> ExplicitDistribution {
        self.dist
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (c, d)| acc * d + c)
    }

    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        out
    }

    pub fn marginal(&self, axis: usize) -> ExplicitDistribution {
        let mut out = vec![0.0; self.dims[axis]];
        for (flat, p) in self.dist.probs().iter().enumerate() {
            out[self.coords(flat)[axis]] += p;
        }
        ExplicitDistribution::new(out).expect("marginal of a distribution")
    }
}

/// Per-bin sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn from_samples(n: usize, samples: &[usize]) -> Self {
        let mut c = Self::zeros(n);
        for &s in samples {
            c.add(s);
        }
        c
    }

    pub fn add(&mut self, bin: usize) {
        self.counts[bin] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}
