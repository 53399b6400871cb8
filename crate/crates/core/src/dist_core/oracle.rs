use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, TestRng};

use super::sampling::{poisson, sample};
use super::types::{CountVector, ExplicitDistribution};

/// The only access a tester has to an unknown distribution.
pub trait SampleOracle {
    fn domain_size(&self) -> usize;
    fn next_sample(&mut self) -> Result<usize>;
    fn samples_drawn(&self) -> u64;
}

impl<T: SampleOracle + ?Sized> SampleOracle for &mut T {
    fn domain_size(&self) -> usize {
        (**self).domain_size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        (**self).next_sample()
    }
    fn samples_drawn(&self) -> u64 {
        (**self).samples_drawn()
    }
}

impl<T: SampleOracle + ?Sized> SampleOracle for Box<T> {
    fn domain_size(&self) -> usize {
        (**self).domain_size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        (**self).next_sample()
    }
    fn samples_drawn(&self) -> u64 {
        (**self).samples_drawn()
    }
}

/// Live i.i.d. draws from an explicit distribution with a private stream.
#[derive(Debug, Clone)]
pub struct DistributionOracle {
    dist: Arc<ExplicitDistribution>,
    rng: TestRng,
    drawn: u64,
}

impl DistributionOracle {
    pub fn new(dist: Arc<ExplicitDistribution>, seed: u64) -> Self {
        Self {
            dist,
            rng: rng_from_seed(seed),
            drawn: 0,
        }
    }

    pub fn distribution(&self) -> &ExplicitDistribution {
        &self.dist
    }
}

impl SampleOracle for DistributionOracle {
    fn domain_size(&self) -> usize {
        self.dist.n()
    }
    fn next_sample(&mut self) -> Result<usize> {
        self.drawn += 1;
        Ok(sample(&self.dist, &mut self.rng))
    }
    fn samples_drawn(&self) -> u64 {
        self.drawn
    }
}

/// Serves a fixed sample sequence in order and fails once it runs out.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    n: usize,
    samples: Vec<usize>,
    pos: usize,
}

impl ReplayOracle {
    pub fn new(n: usize, samples: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = samples.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidArgument(format!(
                "sample {} outside domain of size {n}",
                bad + 1
            )));
        }
        Ok(Self { n, samples, pos: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.pos
    }
}

impl SampleOracle for ReplayOracle {
    fn domain_size(&self) -> usize {
        self.n
    }
    fn next_sample(&mut self) -> Result<usize> {
        match self.samples.get(self.pos) {
            Some(&s) => {
                self.pos += 1;
                Ok(s)
            }
            None => Err(Error::InsufficientSamples {
                drawn: self.pos as u64,
            }),
        }
    }
    fn samples_drawn(&self) -> u64 {
        self.pos as u64
    }
}

/// Draws `N ~ Poi(m)` samples and returns their histogram.
pub fn poissonized_oracle_counts<O, R>(oracle: &mut O, m: f64, rng: &mut R) -> Result<CountVector>
where
    O: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let draws = poisson(m, rng);
    let mut c = CountVector::zeros(oracle.domain_size());
    for _ in 0..draws {
        c.add(oracle.next_sample()?);
    }
    Ok(c)
}
