use std::cell::RefCell;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist_core::{poisson, ExplicitDistribution, SampleOracle};
use crate::error::{invalid, Error, Result};
use crate::l2_engine::l2_min_radius_test;
use crate::rng::{fork, TestRng};
use crate::split_reduction::{SplitMap, SplitOracle};

use super::oracles::Shared;
use super::{check_eps, Answer, Params, StageRecord, TestVerdict, Trace};

/// A partition of `[n]` into contiguous non-empty intervals, given by their
/// start points (the first is 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPartition {
    n: usize,
    starts: Vec<usize>,
}

impl IntervalPartition {
    pub fn new(n: usize, starts: Vec<usize>) -> Result<Self> {
        if n == 0 || starts.first() != Some(&0) {
            return invalid("partition must start at bin 0 of a non-empty domain");
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) || *starts.last().unwrap() >= n {
            return invalid("interval starts must be strictly increasing and inside the domain");
        }
        Ok(Self { n, starts })
    }

    /// `k` intervals of near-equal length.
    pub fn equal(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return invalid(format!("cannot cut {n} bins into {k} intervals"));
        }
        Self::new(n, (0..k).map(|j| j * n / k).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.starts.len()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn interval(&self, j: usize) -> Range<usize> {
        let end = self.starts.get(j + 1).copied().unwrap_or(self.n);
        self.starts[j]..end
    }

    pub fn interval_of(&self, i: usize) -> usize {
        self.starts.partition_point(|&s| s <= i) - 1
    }

    /// The flattening of p: every interval's mass spread evenly over it.
    pub fn flatten(&self, p: &ExplicitDistribution) -> Result<ExplicitDistribution> {
        if p.n() != self.n {
            return Err(Error::DimensionMismatch(self.n, p.n()));
        }
        let mut out = vec![0.0; self.n];
        for j in 0..self.k() {
            let r = self.interval(j);
            let mean = p.probs()[r.clone()].iter().sum::<f64>() / r.len() as f64;
            out[r].fill(mean);
        }
        ExplicitDistribution::new(out)
    }
}

/// Draws from p, then returns a uniform bin of the refined interval holding the draw.
struct FlattenOracle<'a, O> {
    inner: O,
    part: &'a IntervalPartition,
    offsets: &'a [usize],
    n_split: usize,
    rng: TestRng,
}

impl<O: SampleOracle> SampleOracle for FlattenOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.n_split
    }
    fn next_sample(&mut self) -> Result<usize> {
        let j = self.part.interval_of(self.inner.next_sample()?);
        Ok(self.rng.random_range(self.offsets[j]..self.offsets[j + 1]))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// Is p flat on every interval of `part`? Each bin of interval I is cut into
/// `ceil(n/(k|I|))` pieces, then into `floor(n a_I/(k|I|)) + 1` more from a
/// `Poi(m)` sample, and the split p is compared with its own flattening.
pub fn k_histogram<P, R>(
    p: &mut P,
    n: usize,
    part: &IntervalPartition,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if part.n() != n {
        return Err(Error::DimensionMismatch(n, part.n()));
    }
    if p.domain_size() != n {
        return Err(Error::DimensionMismatch(n, p.domain_size()));
    }
    let p0 = p.samples_drawn();
    let k = part.k();
    let (nf, kf) = (n as f64, k as f64);
    let m = kf.min((nf * kf).cbrt() * eps.powf(-4.0 / 3.0));
    let mut hits = vec![0u64; k];
    for _ in 0..poisson(m, rng) {
        hits[part.interval_of(p.next_sample()?)] += 1;
    }
    let mut a = vec![0u64; n];
    let mut offsets = vec![0usize];
    for (j, &h) in hits.iter().enumerate() {
        let r = part.interval(j);
        let len = r.len() as f64;
        let pre = (nf / (kf * len)).ceil() as u64;
        let post = (nf * h as f64 / (kf * len)).floor() as u64 + 1;
        a[r.clone()].fill(pre * post);
        offsets.push(offsets[j] + r.len() * (pre * post) as usize);
    }
    let sm = SplitMap::from_a(a)?;
    let n_split = sm.n_split();
    let b_given = params.hist_b_c * (kf / (nf * m)).sqrt();
    let cell = RefCell::new(&mut *p);
    let mut ps = SplitOracle::new(Shared::new(&cell), &sm, fork(rng))?;
    let mut qs = FlattenOracle {
        inner: Shared::new(&cell),
        part,
        offsets: &offsets,
        n_split,
        rng: fork(rng),
    };
    let radius = eps / (n_split as f64).sqrt();
    let (ok, recs) = l2_min_radius_test(
        &mut ps,
        &mut qs,
        n_split,
        radius,
        params.fail_prob,
        &params.l2,
        rng,
    )?;
    let mut t = Trace::default();
    t.push(
        StageRecord::new("k_histogram/refine")
            .with("k", kf)
            .with("m", m)
            .with("n_split", n_split as f64)
            .with("b_given", b_given),
    );
    t.extend("k_histogram", recs);
    Ok(t.finish(Answer::from_accept(ok), vec![("p", p.samples_drawn() - p0)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_validation() {
        assert!(IntervalPartition::new(8, vec![0, 4]).is_ok());
        assert!(IntervalPartition::new(8, vec![1, 4]).is_err());
        assert!(IntervalPartition::new(8, vec![0, 4, 4]).is_err());
        assert!(IntervalPartition::new(8, vec![0, 8]).is_err());
        let p = IntervalPartition::equal(10, 3).unwrap();
        assert_eq!(p.starts(), &[0, 3, 6]);
        assert_eq!(p.interval(2), 6..10);
        assert_eq!(
            (0..10).map(|i| p.interval_of(i)).collect::<Vec<_>>(),
            vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
        );
    }

    #[test]
    fn pre_refinement_example() {
        // n = 8, k = 2, first interval of two bins: ceil(8 / (2 * 2)) = 2 pieces per bin
        let part = IntervalPartition::new(8, vec![0, 2]).unwrap();
        let len = part.interval(0).len() as f64;
        assert_eq!((8.0 / (2.0 * len)).ceil(), 2.0);
    }

    #[test]
    fn flatten_is_per_interval_mean() {
        let part = IntervalPartition::new(4, vec![0, 2]).unwrap();
        let p = ExplicitDistribution::new(vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        let f = part.flatten(&p).unwrap();
        for (a, b) in f.probs().iter().zip([0.2, 0.2, 0.3, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
