use std::cell::RefCell;

use rand::Rng;

use crate::dist_core::SampleOracle;
use crate::error::{Error, Result};
use crate::rng::TestRng;

pub(crate) const OUTSIDE: u32 = u32::MAX;

/// Lets several wrappers draw from one oracle in turn.
pub(crate) struct Shared<'a, O> {
    cell: &'a RefCell<O>,
    drawn: u64,
}

impl<'a, O: SampleOracle> Shared<'a, O> {
    pub fn new(cell: &'a RefCell<O>) -> Self {
        Self { cell, drawn: 0 }
    }
}

impl<O: SampleOracle> SampleOracle for Shared<'_, O> {
    fn domain_size(&self) -> usize {
        self.cell.borrow().domain_size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        self.drawn += 1;
        self.cell.borrow_mut().next_sample()
    }
    fn samples_drawn(&self) -> u64 {
        self.drawn
    }
}

/// `index[i]` is the position of bin `i` inside the subset, or `OUTSIDE`.
pub(crate) fn subset_index(n: usize, members: &[usize]) -> Vec<u32> {
    let mut idx = vec![OUTSIDE; n];
    for (pos, &i) in members.iter().enumerate() {
        idx[i] = pos as u32;
    }
    idx
}

/// Draws from `(p | S)` by discarding draws outside S.
///
/// A single conditional draw that needs more than `max_attempts` raw draws
/// aborts with `BudgetExceeded`.
pub(crate) struct RejectionOracle<'a, O> {
    inner: O,
    index: &'a [u32],
    size: usize,
    max_attempts: u64,
}

impl<'a, O: SampleOracle> RejectionOracle<'a, O> {
    /// `expected_rate` is the anticipated mass of S; the cap is a million
    /// times the expected number of attempts.
    pub fn new(inner: O, index: &'a [u32], size: usize, expected_rate: f64) -> Self {
        let max_attempts = (1e6 / expected_rate.max(1e-12)).ceil().min(1e15) as u64;
        Self {
            inner,
            index,
            size,
            max_attempts,
        }
    }
}

impl<O: SampleOracle> SampleOracle for RejectionOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.size
    }
    fn next_sample(&mut self) -> Result<usize> {
        for _ in 0..self.max_attempts {
            let i = self.inner.next_sample()?;
            let local = self.index[i];
            if local != OUTSIDE {
                return Ok(local as usize);
            }
        }
        Err(Error::BudgetExceeded(format!(
            "rejection sampler found no draw inside a subset of size {} after {} attempts",
            self.size, self.max_attempts
        )))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// Pushes draws through a bin-to-label map (e.g. bin to category).
pub(crate) struct LabelOracle<'a, O> {
    inner: O,
    label: &'a [u32],
    labels: usize,
}

impl<'a, O: SampleOracle> LabelOracle<'a, O> {
    pub fn new(inner: O, label: &'a [u32], labels: usize) -> Self {
        Self {
            inner,
            label,
            labels,
        }
    }
}

impl<O: SampleOracle> SampleOracle for LabelOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.labels
    }
    fn next_sample(&mut self) -> Result<usize> {
        Ok(self.label[self.inner.next_sample()?] as usize)
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// Keeps draws inside S and scatters the rest uniformly over `pad` fresh bins.
pub(crate) struct PaddedOracle<'a, O> {
    inner: O,
    index: &'a [u32],
    size: usize,
    pad: usize,
    rng: TestRng,
}

impl<'a, O: SampleOracle> PaddedOracle<'a, O> {
    pub fn new(inner: O, index: &'a [u32], size: usize, pad: usize, rng: TestRng) -> Self {
        Self {
            inner,
            index,
            size,
            pad,
            rng,
        }
    }
}

impl<O: SampleOracle> SampleOracle for PaddedOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.size + self.pad
    }
    fn next_sample(&mut self) -> Result<usize> {
        let i = self.inner.next_sample()?;
        let local = self.index[i];
        Ok(if local != OUTSIDE {
            local as usize
        } else {
            self.size + self.rng.random_range(0..self.pad)
        })
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist_core::ReplayOracle;

    #[test]
    fn rejection_keeps_subset_in_order() {
        let idx = subset_index(5, &[3, 1]);
        let mut o = RejectionOracle::new(
            ReplayOracle::new(5, vec![0, 1, 2, 3, 4, 3]).unwrap(),
            &idx,
            2,
            0.5,
        );
        assert_eq!(o.next_sample().unwrap(), 1);
        assert_eq!(o.next_sample().unwrap(), 0);
        assert_eq!(o.next_sample().unwrap(), 0);
        assert_eq!(o.samples_drawn(), 6);
    }

    #[test]
    fn rejection_cap_aborts() {
        let idx = subset_index(2, &[1]);
        let mut o = RejectionOracle::new(ReplayOracle::new(2, vec![0; 10]).unwrap(), &idx, 1, 1e6);
        assert!(matches!(o.next_sample(), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn shared_counts_per_handle() {
        let cell = RefCell::new(ReplayOracle::new(3, vec![0, 1, 2]).unwrap());
        let mut a = Shared::new(&cell);
        let mut b = Shared::new(&cell);
        assert_eq!(a.next_sample().unwrap(), 0);
        assert_eq!(b.next_sample().unwrap(), 1);
        assert_eq!(a.next_sample().unwrap(), 2);
        assert_eq!((a.samples_drawn(), b.samples_drawn()), (2, 1));
    }
}
