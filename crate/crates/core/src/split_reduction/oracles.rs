use rand::Rng;

use crate::dist_core::SampleOracle;
use crate::error::{Error, Result};
use crate::rng::TestRng;

use super::{split_sample, SplitMap};

/// Sample access to `p_S` given sample access to `p`.
pub struct SplitOracle<'a, O> {
    inner: O,
    map: &'a SplitMap,
    rng: TestRng,
}

impl<'a, O: SampleOracle> SplitOracle<'a, O> {
    pub fn new(inner: O, map: &'a SplitMap, rng: TestRng) -> Result<Self> {
        if inner.domain_size() != map.n() {
            return Err(Error::DimensionMismatch(map.n(), inner.domain_size()));
        }
        Ok(Self { inner, map, rng })
    }
}

impl<O: SampleOracle> SampleOracle for SplitOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.map.n_split()
    }
    fn next_sample(&mut self) -> Result<usize> {
        let i = self.inner.next_sample()?;
        Ok(split_sample(i, self.map, &mut self.rng))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// One split map per coordinate of a product domain. The split of cell
/// `(x_1, .., x_g)` has `prod a^t_{x_t}` sub-cells.
#[derive(Debug, Clone)]
pub struct ProductSplit {
    maps: Vec<SplitMap>,
}

impl ProductSplit {
    pub fn new(maps: Vec<SplitMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidArgument(
                "product split needs at least one map".into(),
            ));
        }
        maps.iter()
            .try_fold(1usize, |acc, m| acc.checked_mul(m.n_split()))
            .ok_or_else(|| Error::InvalidArgument("product split domain overflows".into()))?;
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[SplitMap] {
        &self.maps
    }

    pub fn n_split(&self) -> usize {
        self.maps.iter().map(|m| m.n_split()).product()
    }

    /// Part sizes before splitting.
    pub fn part_sizes(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.n()).collect()
    }

    pub fn split_cell<R: Rng + ?Sized>(&self, coords: &[usize], rng: &mut R) -> usize {
        coords.iter().zip(&self.maps).fold(0usize, |acc, (&c, m)| {
            acc * m.n_split() + split_sample(c, m, rng)
        })
    }
}

fn decode(mut flat: usize, radix: &[usize], out: &mut [usize]) {
    for (slot, &r) in out.iter_mut().zip(radix).rev() {
        *slot = flat % r;
        flat /= r;
    }
}

/// Sample access to the split of a distribution on a product of parts.
/// The inner oracle draws part-encoded cells (mixed radix over part sizes).
pub struct ProductSplitOracle<'a, O> {
    inner: O,
    split: &'a ProductSplit,
    radix: Vec<usize>,
    buf: Vec<usize>,
    rng: TestRng,
}

impl<'a, O: SampleOracle> ProductSplitOracle<'a, O> {
    pub fn new(inner: O, split: &'a ProductSplit, rng: TestRng) -> Result<Self> {
        let radix = split.part_sizes();
        let size: usize = radix.iter().product();
        if inner.domain_size() != size {
            return Err(Error::DimensionMismatch(size, inner.domain_size()));
        }
        let buf = vec![0; radix.len()];
        Ok(Self {
            inner,
            split,
            radix,
            buf,
            rng,
        })
    }
}

impl<O: SampleOracle> SampleOracle for ProductSplitOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.split.n_split()
    }
    fn next_sample(&mut self) -> Result<usize> {
        let cell = self.inner.next_sample()?;
        decode(cell, &self.radix, &mut self.buf);
        Ok(self.split.split_cell(&self.buf, &mut self.rng))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// Partition of the axes of `[n_1] x .. x [n_d]` into ordered groups.
/// A joint cell is re-encoded as mixed radix over the group sizes, each
/// group's own coordinates taken in the listed axis order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisGrouping {
    dims: Vec<usize>,
    groups: Vec<Vec<usize>>,
    part_sizes: Vec<usize>,
}

impl AxisGrouping {
    pub fn new(dims: Vec<usize>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; dims.len()];
        for &ax in groups.iter().flatten() {
            if ax >= dims.len() || seen[ax] {
                return Err(Error::InvalidArgument(format!(
                    "axis {ax} missing or repeated in grouping"
                )));
            }
            seen[ax] = true;
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::InvalidArgument("empty axis group".into()));
        }
        let part_sizes = groups
            .iter()
            .map(|g| g.iter().map(|&a| dims[a]).product())
            .collect();
        Ok(Self {
            dims,
            groups,
            part_sizes,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn part_sizes(&self) -> &[usize] {
        &self.part_sizes
    }

    /// Size of the grouped domain (the product of the used axes).
    pub fn size(&self) -> usize {
        self.part_sizes.iter().product()
    }

    pub fn joint_size(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn parts(&self, flat: usize, coords: &mut [usize], out: &mut [usize]) {
        decode(flat, &self.dims, coords);
        for (slot, g) in out.iter_mut().zip(&self.groups) {
            *slot = g.iter().fold(0, |acc, &a| acc * self.dims[a] + coords[a]);
        }
    }

    pub fn encode_parts(&self, parts: &[usize]) -> usize {
        parts
            .iter()
            .zip(&self.part_sizes)
            .fold(0, |acc, (&c, &r)| acc * r + c)
    }
}

/// Re-encodes joint draws by axis group. Axes left out of every group are
/// marginalized away.
pub struct RegroupOracle<'a, O> {
    inner: O,
    grouping: &'a AxisGrouping,
    coords: Vec<usize>,
    parts: Vec<usize>,
}

impl<'a, O: SampleOracle> RegroupOracle<'a, O> {
    pub fn new(inner: O, grouping: &'a AxisGrouping) -> Result<Self> {
        if inner.domain_size() != grouping.joint_size() {
            return Err(Error::DimensionMismatch(
                grouping.joint_size(),
                inner.domain_size(),
            ));
        }
        let coords = vec![0; grouping.dims.len()];
        let parts = vec![0; grouping.groups.len()];
        Ok(Self {
            inner,
            grouping,
            coords,
            parts,
        })
    }
}

impl<O: SampleOracle> SampleOracle for RegroupOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.grouping.size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        let f = self.inner.next_sample()?;
        self.grouping.parts(f, &mut self.coords, &mut self.parts);
        Ok(self.grouping.encode_parts(&self.parts))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

/// Draws one joint sample per group and keeps group `t` from draw `t`, so
/// the output law is the product of the group marginals.
pub struct SwapOracle<'a, O> {
    inner: O,
    grouping: &'a AxisGrouping,
    coords: Vec<usize>,
    parts: Vec<usize>,
    out: Vec<usize>,
}

impl<'a, O: SampleOracle> SwapOracle<'a, O> {
    pub fn new(inner: O, grouping: &'a AxisGrouping) -> Result<Self> {
        if inner.domain_size() != grouping.joint_size() {
            return Err(Error::DimensionMismatch(
                grouping.joint_size(),
                inner.domain_size(),
            ));
        }
        let g = grouping.groups.len();
        Ok(Self {
            inner,
            grouping,
            coords: vec![0; grouping.dims.len()],
            parts: vec![0; g],
            out: vec![0; g],
        })
    }
}

impl<O: SampleOracle> SampleOracle for SwapOracle<'_, O> {
    fn domain_size(&self) -> usize {
        self.grouping.size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        for t in 0..self.out.len() {
            let f = self.inner.next_sample()?;
            self.grouping.parts(f, &mut self.coords, &mut self.parts);
            self.out[t] = self.parts[t];
        }
        Ok(self.grouping.encode_parts(&self.out))
    }
    fn samples_drawn(&self) -> u64 {
        self.inner.samples_drawn()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_reencodes() {
        let g = AxisGrouping::new(vec![2, 3, 4], vec![vec![2], vec![0, 1]]).unwrap();
        assert_eq!(g.part_sizes(), &[4, 6]);
        let mut coords = [0; 3];
        let mut parts = [0; 2];
        // cell (1, 2, 3) has flat index 1*12 + 2*4 + 3 = 23
        g.parts(23, &mut coords, &mut parts);
        assert_eq!(coords, [1, 2, 3]);
        assert_eq!(parts, [3, 5]);
        assert_eq!(g.encode_parts(&parts), 3 * 6 + 5);
        assert!(AxisGrouping::new(vec![2, 3], vec![vec![0], vec![0]]).is_err());
    }

    #[test]
    fn product_split_size() {
        let ps = ProductSplit::new(vec![
            SplitMap::from_a(vec![2, 1]).unwrap(),
            SplitMap::from_a(vec![1, 3, 1]).unwrap(),
        ])
        .unwrap();
        assert_eq!(ps.n_split(), 3 * 5);
    }
}
