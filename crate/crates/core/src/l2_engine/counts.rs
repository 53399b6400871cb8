use std::collections::HashMap;

use rand::Rng;

use crate::dist_core::{poisson, CountVector, SampleOracle};
use crate::error::Result;

/// Histogram that switches to a hash map when the domain dwarfs the draw count.
#[derive(Debug, Clone)]
pub(crate) enum Counts {
    Dense(Vec<u32>),
    Sparse(HashMap<usize, u32>),
}

impl Counts {
    pub fn for_draws(domain: usize, draws: u64) -> Self {
        if (domain as u64) <= 16 * draws + 4096 {
            Counts::Dense(vec![0; domain])
        } else {
            Counts::Sparse(HashMap::with_capacity(draws as usize))
        }
    }

    pub fn add(&mut self, bin: usize) {
        match self {
            Counts::Dense(v) => v[bin] += 1,
            Counts::Sparse(h) => *h.entry(bin).or_insert(0) += 1,
        }
    }

    fn get(&self, bin: usize) -> i64 {
        match self {
            Counts::Dense(v) => v[bin] as i64,
            Counts::Sparse(h) => h.get(&bin).copied().unwrap_or(0) as i64,
        }
    }

    fn nonzero(&self) -> Box<dyn Iterator<Item = (usize, i64)> + '_> {
        match self {
            Counts::Dense(v) => Box::new(
                v.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i, c as i64)),
            ),
            Counts::Sparse(h) => Box::new(h.iter().map(|(&i, &c)| (i, c as i64))),
        }
    }

    /// `sum X_i (X_i - 1)`.
    pub fn collisions(&self) -> i64 {
        self.nonzero().map(|(_, c)| c * (c - 1)).sum()
    }
}

/// `sum ((X_i - Y_i)^2 - X_i - Y_i)`, integer-exact and order-independent.
pub(crate) fn z_stat(x: &Counts, y: &Counts) -> i64 {
    match (x, y) {
        (Counts::Dense(a), Counts::Dense(b)) => {
            dense_z(a.iter().map(|&c| c as i64), b.iter().map(|&c| c as i64))
        }
        _ => {
            let mut z = 0i64;
            for (i, xi) in x.nonzero() {
                let yi = y.get(i);
                z += (xi - yi) * (xi - yi) - xi - yi;
            }
            for (i, yi) in y.nonzero() {
                if x.get(i) == 0 {
                    z += yi * yi - yi;
                }
            }
            z
        }
    }
}

pub(crate) fn dense_z(x: impl Iterator<Item = i64>, y: impl Iterator<Item = i64>) -> i64 {
    x.zip(y).map(|(a, b)| (a - b) * (a - b) - a - b).sum()
}

pub(crate) fn draw_counts<O, R>(oracle: &mut O, m: f64, rng: &mut R) -> Result<Counts>
where
    O: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let draws = poisson(m, rng);
    let mut c = Counts::for_draws(oracle.domain_size(), draws);
    for _ in 0..draws {
        c.add(oracle.next_sample()?);
    }
    Ok(c)
}

impl From<&CountVector> for Counts {
    fn from(c: &CountVector) -> Self {
        Counts::Dense(c.counts().iter().map(|&x| x as u32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_agree() {
        let xs = [0usize, 3, 3, 9, 9, 9, 4];
        let ys = [3usize, 9, 1, 1, 7];
        let mut dx = Counts::Dense(vec![0; 10]);
        let mut dy = Counts::Dense(vec![0; 10]);
        let mut sx = Counts::Sparse(HashMap::new());
        let mut sy = Counts::Sparse(HashMap::new());
        for &i in &xs {
            dx.add(i);
            sx.add(i);
        }
        for &i in &ys {
            dy.add(i);
            sy.add(i);
        }
        let z = z_stat(&dx, &dy);
        assert_eq!(z, z_stat(&sx, &sy));
        assert_eq!(z, z_stat(&dx, &sy));
        assert_eq!(z, z_stat(&sx, &dy));
        assert_eq!(dx.collisions(), sx.collisions());
    }
}
