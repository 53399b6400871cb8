use std::cell::RefCell;

use rand::Rng;

use crate::dist_core::{poisson, ExplicitDistribution, SampleOracle};
use crate::error::{invalid, Error, Result};
use crate::l2_engine::l2_min_radius_test;
use crate::rng::fork;
use crate::split_reduction::{
    AxisGrouping, ProductSplit, ProductSplitOracle, RegroupOracle, SplitMap, SwapOracle,
};

use super::oracles::Shared;
use super::{check_eps, Answer, Params, StageRecord, StageResult, TestVerdict, Trace};

/// How the split multiset of one part is built.
#[derive(Debug, Clone, PartialEq)]
pub enum PartSplit {
    /// `Poi(k)` draws from the part marginal.
    Poisson(f64),
    /// Fixed multiplicities `a_i`.
    Fixed(Vec<u64>),
}

/// A product test: are the axis groups of `grouping` mutually independent?
#[derive(Debug, Clone)]
pub struct ProductTestSpec {
    pub grouping: AxisGrouping,
    pub parts: Vec<PartSplit>,
}

impl ProductTestSpec {
    /// The largest part gets `k = min(n_1, n_1^{2/3} (prod others)^{1/3} eps^{-4/3})`,
    /// every other part gets `k = n_t`.
    pub fn balanced(grouping: AxisGrouping, eps: f64) -> Self {
        let sizes = grouping.part_sizes().to_vec();
        let big = (0..sizes.len()).fold(0, |best, t| if sizes[t] > sizes[best] { t } else { best });
        let n1 = sizes[big] as f64;
        let rest: f64 = sizes
            .iter()
            .enumerate()
            .filter(|&(t, _)| t != big)
            .map(|(_, &s)| s as f64)
            .product();
        let parts = sizes
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                if t == big {
                    PartSplit::Poisson(
                        n1.min((n1.powf(2.0 / 3.0) * rest.cbrt() * eps.powf(-4.0 / 3.0)).ceil()),
                    )
                } else {
                    PartSplit::Poisson(s as f64)
                }
            })
            .collect();
        Self { grouping, parts }
    }

    /// `2^g / sqrt(prod k)`, the a-priori bound on the split norm.
    pub fn b_given(&self) -> f64 {
        let prod: f64 = self
            .parts
            .iter()
            .zip(self.grouping.part_sizes())
            .map(|(s, &size)| match s {
                PartSplit::Poisson(k) => *k,
                PartSplit::Fixed(_) => size as f64,
            })
            .product();
        2f64.powi(self.parts.len() as i32) / prod.sqrt()
    }
}

fn part_map<P, R>(
    p: &mut P,
    grouping: &AxisGrouping,
    t: usize,
    split: &PartSplit,
    rng: &mut R,
) -> Result<SplitMap>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let size = grouping.part_sizes()[t];
    match split {
        PartSplit::Fixed(a) => {
            if a.len() != size {
                return Err(Error::DimensionMismatch(size, a.len()));
            }
            SplitMap::from_a(a.clone())
        }
        PartSplit::Poisson(k) => {
            let mut coords = vec![0; grouping.dims().len()];
            let mut parts = vec![0; grouping.groups().len()];
            let mut mult = vec![0u64; size];
            for _ in 0..poisson(*k, rng) {
                grouping.parts(p.next_sample()?, &mut coords, &mut parts);
                mult[parts[t]] += 1;
            }
            SplitMap::from_multiplicities(&mult)
        }
    }
}

/// Splits each part, then compares the regrouped p against the law of
/// one-part-per-draw swaps, which is exactly the product of the part marginals.
pub(crate) fn product_stage<P, R>(
    p: &mut P,
    spec: &ProductTestSpec,
    eps: f64,
    fail_prob: f64,
    params: &Params,
    rng: &mut R,
) -> StageResult
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let g = &spec.grouping;
    if p.domain_size() != g.joint_size() {
        return Err(Error::DimensionMismatch(g.joint_size(), p.domain_size()));
    }
    let before = p.samples_drawn();
    let maps = spec
        .parts
        .iter()
        .enumerate()
        .map(|(t, s)| part_map(&mut *p, g, t, s, rng))
        .collect::<Result<Vec<_>>>()?;
    let split_draws = p.samples_drawn() - before;
    let ps = ProductSplit::new(maps)?;
    let n_split = ps.n_split();
    let cell = RefCell::new(&mut *p);
    let mut po =
        ProductSplitOracle::new(RegroupOracle::new(Shared::new(&cell), g)?, &ps, fork(rng))?;
    let mut qo = ProductSplitOracle::new(SwapOracle::new(Shared::new(&cell), g)?, &ps, fork(rng))?;
    let radius = eps / (n_split as f64).sqrt();
    let (accept, more) = l2_min_radius_test(
        &mut po, &mut qo, n_split, radius, fail_prob, &params.l2, rng,
    )?;
    let mut rec = StageRecord::new("product")
        .with("parts", spec.parts.len() as f64)
        .with("split_draws", split_draws as f64)
        .with("n_split", n_split as f64)
        .with("b_given", spec.b_given());
    for (t, s) in spec.parts.iter().enumerate() {
        if let PartSplit::Poisson(k) = s {
            rec = rec.with(&format!("k{t}"), *k);
        }
    }
    let mut recs = vec![rec];
    recs.extend(more);
    Ok((accept, recs))
}

/// Runs a product test on its own and reports the draws from p.
pub fn product_test<P, R>(
    p: &mut P,
    spec: &ProductTestSpec,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    let p0 = p.samples_drawn();
    let (ok, recs) = product_stage(p, spec, eps, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("product_test", recs);
    Ok(t.finish(Answer::from_accept(ok), vec![("p", p.samples_drawn() - p0)]))
}

fn check_joint<P: SampleOracle + ?Sized>(p: &P, dims: &[usize]) -> Result<()> {
    let size = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidArgument("joint domain overflows".into()))?;
    if dims.contains(&0) {
        return invalid("zero-length axis");
    }
    if p.domain_size() != size {
        return Err(Error::DimensionMismatch(size, p.domain_size()));
    }
    Ok(())
}

/// Independence of the two coordinates of p on `[n] x [m]`, `n >= m`.
pub fn independence_2d<P, R>(
    p: &mut P,
    n: usize,
    m: usize,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if n < m {
        return invalid(format!(
            "independence_2d needs n >= m, got n={n} m={m}; swap the axes"
        ));
    }
    check_joint(p, &[n, m])?;
    let p0 = p.samples_drawn();
    let spec =
        ProductTestSpec::balanced(AxisGrouping::new(vec![n, m], vec![vec![0], vec![1]])?, eps);
    let (ok, recs) = product_stage(p, &spec, eps, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("independence_2d", recs);
    Ok(t.finish(Answer::from_accept(ok), vec![("p", p.samples_drawn() - p0)]))
}

/// Collection in the sampling model: p on `[n] x [m]` whose second marginal
/// is known, so the second split is the fixed `a_j = 1 + floor(m p2_j)`.
pub fn collection_sampling<P, R>(
    p: &mut P,
    marginal2: &ExplicitDistribution,
    n: usize,
    m: usize,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if marginal2.n() != m {
        return Err(Error::DimensionMismatch(m, marginal2.n()));
    }
    check_joint(p, &[n, m])?;
    let p0 = p.samples_drawn();
    let (nf, mf) = (n as f64, m as f64);
    let k = nf.min((nf.powf(2.0 / 3.0) * mf.cbrt() * eps.powf(-4.0 / 3.0)).ceil());
    let a2 = marginal2
        .probs()
        .iter()
        .map(|&x| 1 + (mf * x).floor() as u64)
        .collect();
    let spec = ProductTestSpec {
        grouping: AxisGrouping::new(vec![n, m], vec![vec![0], vec![1]])?,
        parts: vec![PartSplit::Poisson(k), PartSplit::Fixed(a2)],
    };
    let (ok, recs) = product_stage(p, &spec, eps, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("collection_sampling", recs);
    Ok(t.finish(Answer::from_accept(ok), vec![("p", p.samples_drawn() - p0)]))
}

/// Greedy partition of the axes: each group takes axes in order while the
/// group's product stays at most `sqrt(N)`. Returns positions into `dims`.
pub fn greedy_partition(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: f64 = dims.iter().map(|&d| d as f64).product();
    let cap = total.sqrt();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut prod = f64::INFINITY;
    for (pos, &d) in dims.iter().enumerate() {
        if prod * d as f64 > cap {
            groups.push(vec![pos]);
            prod = d as f64;
        } else {
            groups
                .last_mut()
                .expect("first axis opens a group")
                .push(pos);
            prod *= d as f64;
        }
    }
    groups
}

/// Mutual independence of all coordinates of p on `[n_1] x .. x [n_d]`.
///
/// When some `n_j^{1/3} N^{1/3} / eps^{4/3}` dominates `sqrt(N) / eps^2`, axis
/// j is tested against the rest at `eps/2` and the rest recursed on at
/// `eps/2`. Otherwise the axes are greedily split into parts of size at most
/// `sqrt(N)`, tested for mutual independence at `eps/4`, and each part is
/// recursed on at `eps/4`.
pub fn independence_dd<P, R>(
    p: &mut P,
    dims: &[usize],
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if dims.len() < 2 {
        return invalid("independence needs at least two axes");
    }
    check_joint(p, dims)?;
    if dims.len() == 2 && dims[0] >= dims[1] {
        return independence_2d(p, dims[0], dims[1], eps, params, rng);
    }
    let p0 = p.samples_drawn();
    let active: Vec<usize> = (0..dims.len()).filter(|&a| dims[a] > 1).collect();
    let mut t = Trace::default();
    let ok = recurse(
        p,
        dims,
        &active,
        eps,
        params.fail_prob,
        params,
        rng,
        &mut t,
        "root",
    )?;
    Ok(t.finish(Answer::from_accept(ok), vec![("p", p.samples_drawn() - p0)]))
}

#[allow(clippy::too_many_arguments)]
fn recurse<P, R>(
    p: &mut P,
    dims: &[usize],
    active: &[usize],
    eps: f64,
    fail: f64,
    params: &Params,
    rng: &mut R,
    t: &mut Trace,
    path: &str,
) -> Result<bool>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    if active.len() < 2 {
        return Ok(true);
    }
    let sizes: Vec<f64> = active.iter().map(|&a| dims[a] as f64).collect();
    let total: f64 = sizes.iter().product();
    let l2_term = total.sqrt() / (eps * eps);
    let big = (0..active.len()).fold(0, |best, i| if sizes[i] > sizes[best] { i } else { best });
    let split_term = (sizes[big] * total).cbrt() * eps.powf(-4.0 / 3.0);

    if active.len() == 2 {
        let (a, b) = if sizes[0] >= sizes[1] {
            (active[0], active[1])
        } else {
            (active[1], active[0])
        };
        let spec = ProductTestSpec::balanced(
            AxisGrouping::new(dims.to_vec(), vec![vec![a], vec![b]])?,
            eps,
        );
        let (ok, recs) = product_stage(p, &spec, eps, fail, params, rng)?;
        t.extend(path, recs);
        return Ok(ok);
    }
    if split_term >= l2_term {
        let j = active[big];
        let rest: Vec<usize> = active.iter().copied().filter(|&a| a != j).collect();
        t.push(
            StageRecord::new(format!("{path}/branch"))
                .with("axis", j as f64)
                .with("split_term", split_term)
                .with("l2_term", l2_term),
        );
        let spec = ProductTestSpec::balanced(
            AxisGrouping::new(dims.to_vec(), vec![vec![j], rest.clone()])?,
            eps / 2.0,
        );
        let (ok, recs) = product_stage(p, &spec, eps / 2.0, fail / 2.0, params, rng)?;
        t.extend(&format!("{path}/axis{j}"), recs);
        if !ok {
            return Ok(false);
        }
        return recurse(
            p,
            dims,
            &rest,
            eps / 2.0,
            fail / 2.0,
            params,
            rng,
            t,
            &format!("{path}/rest"),
        );
    }
    let sub_dims: Vec<usize> = active.iter().map(|&a| dims[a]).collect();
    let groups: Vec<Vec<usize>> = greedy_partition(&sub_dims)
        .into_iter()
        .map(|g| g.into_iter().map(|i| active[i]).collect())
        .collect();
    t.push(
        StageRecord::new(format!("{path}/branch"))
            .with("groups", groups.len() as f64)
            .with("split_term", split_term)
            .with("l2_term", l2_term),
    );
    let spec =
        ProductTestSpec::balanced(AxisGrouping::new(dims.to_vec(), groups.clone())?, eps / 4.0);
    let (ok, recs) = product_stage(p, &spec, eps / 4.0, fail / 2.0, params, rng)?;
    t.extend(&format!("{path}/groups"), recs);
    if !ok {
        return Ok(false);
    }
    let sub_fail = fail / (2.0 * groups.len() as f64);
    for (gi, g) in groups.iter().enumerate() {
        if !recurse(
            p,
            dims,
            g,
            eps / 4.0,
            sub_fail,
            params,
            rng,
            t,
            &format!("{path}/group{gi}"),
        )? {
            return Ok(false);
        }
    }
    Ok(true)
}
