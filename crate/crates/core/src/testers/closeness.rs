use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::dist_core::{ExplicitDistribution, SampleOracle};
use crate::error::{invalid, Error, Result};
use crate::l2_engine::{
    l2_min_radius_test, l2_norm_estimate_with, l2_radius_test, majority_reps, NORM_MISMATCH_FACTOR,
};
use crate::rng::fork;
use crate::split_reduction::{split_map_from_samples, SplitOracle};

use super::oracles::{subset_index, LabelOracle, RejectionOracle};
use super::{check_eps, prefixed, Answer, Params, StageRecord, StageResult, TestVerdict, Trace};

pub(crate) fn check_pair<P, Q>(p: &P, q: &Q, n: usize) -> Result<()>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
{
    for d in [p.domain_size(), q.domain_size()] {
        if d != n {
            return Err(Error::DimensionMismatch(n, d));
        }
    }
    Ok(())
}

pub(crate) fn default_split_size(n: usize, eps: f64) -> f64 {
    (n as f64).min(((n as f64).powf(2.0 / 3.0) * eps.powf(-4.0 / 3.0)).ceil())
}

/// Split both oracles by a `Poi(k)` sample from q, then run the l2 test at
/// radius `eps / sqrt(n_split)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn closeness_stage<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    eps: f64,
    k: f64,
    fail_prob: f64,
    params: &Params,
    rng: &mut R,
) -> StageResult
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let q_before = q.samples_drawn();
    let sm = split_map_from_samples(&mut *q, n, k, rng)?;
    let split_draws = q.samples_drawn() - q_before;
    let n_split = sm.n_split();
    let mut ps = SplitOracle::new(&mut *p, &sm, fork(rng))?;
    let mut qs = SplitOracle::new(&mut *q, &sm, fork(rng))?;
    let (p1, q1) = (ps.samples_drawn(), qs.samples_drawn());
    let radius = eps / (n_split as f64).sqrt();
    let (accept, more) = l2_min_radius_test(
        &mut ps, &mut qs, n_split, radius, fail_prob, &params.l2, rng,
    )?;
    let mut recs = vec![StageRecord::new("split")
        .with("k", k)
        .with("split_draws", split_draws as f64)
        .with("n_split", n_split as f64)
        .with("b_given", 2.0 / k.sqrt())
        .with("m2_p", (ps.samples_drawn() - p1) as f64)
        .with("m2_q", (qs.samples_drawn() - q1) as f64)];
    recs.extend(more);
    Ok((accept, recs))
}

/// Closeness of two unknown distributions with `k = min(n, n^{2/3} eps^{-4/3})`.
pub fn closeness_equal<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    closeness_equal_k(p, q, n, eps, default_split_size(n, eps), params, rng)
}

/// [`closeness_equal`] with an explicit split size.
pub fn closeness_equal_k<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    eps: f64,
    k: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    check_pair(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let (accept, recs) = closeness_stage(p, q, n, eps, k, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("closeness", recs);
    Ok(t.finish(
        Answer::from_accept(accept),
        vec![("p", p.samples_drawn() - p0), ("q", q.samples_drawn() - q0)],
    ))
}

/// Closeness when q is cheap: `min(n, m1)` draws of q shrink the number of
/// draws needed from p to `O(max(n m1^{-1/2}, sqrt n) / eps^2)`.
pub fn closeness_unequal<Q, P, R>(
    q: &mut Q,
    p: &mut P,
    n: usize,
    eps: f64,
    m1: u64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    Q: SampleOracle + ?Sized,
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if m1 == 0 {
        return invalid("m1 must be at least 1");
    }
    check_pair(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let k = (n as f64).min(m1 as f64);
    let (accept, recs) = closeness_stage(p, q, n, eps, k, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("closeness_unequal", recs);
    Ok(t.finish(
        Answer::from_accept(accept),
        vec![("q", q.samples_drawn() - q0), ("p", p.samples_drawn() - p0)],
    ))
}

/// `(||q^{<1/m}||_0, ||q^{<1/m}||_2)`: support size and l2 norm of the bins
/// lighter than `1/m`.
pub fn q_small_mass_profile(q: &ExplicitDistribution, m: f64) -> (usize, f64) {
    let cut = 1.0 / m;
    let (count, sq) = q
        .probs()
        .iter()
        .filter(|&&x| x > 0.0 && x < cut)
        .fold((0usize, 0.0), |(c, s), &x| (c + 1, s + x * x));
    (count, sq.sqrt())
}

/// Bins grouped by how often a batch of q-draws hit them: bins hit at most
/// `light_max` times form the light category, the rest go by `floor(log2 count)`.
#[derive(Debug, Clone)]
pub(crate) struct Categories {
    pub label: Vec<u32>,
    pub members: Vec<Vec<usize>>,
    /// `None` for the light category.
    pub levels: Vec<Option<u32>>,
}

impl Categories {
    pub fn len(&self) -> usize {
        self.members.len()
    }
}

pub(crate) fn categorize<Q>(q: &mut Q, n: usize, draws: u64, light_max: f64) -> Result<Categories>
where
    Q: SampleOracle + ?Sized,
{
    let mut hits: HashMap<usize, u64> = HashMap::new();
    for _ in 0..draws {
        *hits.entry(q.next_sample()?).or_default() += 1;
    }
    let mut heavy: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (&i, &a) in &hits {
        if a as f64 > light_max {
            heavy.entry(63 - a.leading_zeros()).or_default().push(i);
        }
    }
    let mut label = vec![0u32; n];
    let mut members = Vec::new();
    let mut levels = Vec::new();
    let heavy_count: usize = heavy.values().map(Vec::len).sum();
    if heavy_count < n {
        let light_tag = u32::MAX;
        for bins in heavy.values() {
            for &i in bins {
                label[i] = light_tag;
            }
        }
        let light: Vec<usize> = (0..n).filter(|&i| label[i] != light_tag).collect();
        members.push(light);
        levels.push(None);
    }
    for (j, mut bins) in heavy {
        bins.sort_unstable();
        for &i in &bins {
            label[i] = members.len() as u32;
        }
        members.push(bins);
        levels.push(Some(j));
    }
    Ok(Categories {
        label,
        members,
        levels,
    })
}

pub(crate) fn category_masses<O>(
    o: &mut O,
    label: &[u32],
    cats: usize,
    draws: u64,
) -> Result<Vec<f64>>
where
    O: SampleOracle + ?Sized,
{
    let mut hits = vec![0u64; cats];
    for _ in 0..draws {
        hits[label[o.next_sample()?] as usize] += 1;
    }
    Ok(hits
        .into_iter()
        .map(|h| h as f64 / draws.max(1) as f64)
        .collect())
}

pub(crate) fn category_name(level: Option<u32>) -> String {
    match level {
        None => "light".to_string(),
        Some(j) => format!("cat{j}"),
    }
}

enum Round {
    Done(bool),
    Abort,
}

struct Planned {
    index: Vec<u32>,
    size: usize,
    mass: f64,
    radius: f64,
    b: f64,
    name: String,
}

/// Instance-adaptive closeness: for `m = 1, 2, 4, ..` run the fixed-m
/// procedure within an allowance of `adapt_allow_c * m * ln(n/eps)^adapt_allow_exp`
/// draws, doubling `m` whenever the planned cost would exceed it. The round
/// with `m >= n / eps^2` runs without an allowance.
pub fn closeness_adaptive<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    check_pair(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let m_cap = n as f64 / (eps * eps);
    let log_term = (n as f64 / eps).ln().max(1.0);
    let mut t = Trace::default();
    let mut m = 1.0f64;
    loop {
        let last = 2.0 * m > m_cap;
        let allowance = if last {
            f64::INFINITY
        } else {
            params.adapt_allow_c * m * log_term.powf(params.adapt_allow_exp)
        };
        let mut recs = Vec::new();
        let out = adaptive_round(p, q, n, eps, m, allowance, params, rng, &mut recs)?;
        t.extend(&format!("m{m}"), recs);
        match out {
            Round::Done(accept) => {
                return Ok(t.finish(
                    Answer::from_accept(accept),
                    vec![("p", p.samples_drawn() - p0), ("q", q.samples_drawn() - q0)],
                ));
            }
            Round::Abort => m *= 2.0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_round<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    eps: f64,
    m: f64,
    allowance: f64,
    params: &Params,
    rng: &mut R,
    recs: &mut Vec<StageRecord>,
) -> Result<Round>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let start = p.samples_drawn() + q.samples_drawn();
    let spent = |p: &P, q: &Q| (p.samples_drawn() + q.samples_drawn() - start) as f64;
    let c = params.adapt_c;
    let ln_n = (n as f64).ln().max(1.0);

    let n1 = (params.adapt_cat_c * m * ln_n.powf(params.adapt_cat_exp)).ceil() as u64;
    let cats = categorize(&mut *q, n, n1, ln_n)?;
    let b_cats = cats.len();
    let est_fail = 1.0 / (100.0 * b_cats as f64);
    let conf = (4.0 * b_cats as f64 / est_fail).ln();
    let n_est = n1
        .max((conf * c * c / (2.0 * eps * eps)).ceil() as u64)
        .max((32.0 * conf * c * b_cats as f64 / eps).ceil() as u64);
    let eps_marg = eps / c;
    let marg_cost = if b_cats > 1 {
        8.0 * params.l2.c_sample * (b_cats as f64).sqrt() / (eps_marg * eps_marg)
    } else {
        0.0
    };
    recs.push(
        StageRecord::new("categories")
            .with("draws", n1 as f64)
            .with("categories", b_cats as f64)
            .with("allowance", allowance)
            .with("estimate_draws", n_est as f64),
    );
    if spent(p, q) + 2.0 * n_est as f64 + marg_cost > allowance {
        recs.push(
            StageRecord::new("abort")
                .with("spent", spent(p, q))
                .with("planned", 2.0 * n_est as f64 + marg_cost),
        );
        return Ok(Round::Abort);
    }

    let q_hat = category_masses(&mut *q, &cats.label, b_cats, n_est)?;
    let p_hat = category_masses(&mut *p, &cats.label, b_cats, n_est)?;

    // Dropping the light category costs up to 8 eps / c of the distance budget.
    let light = cats.levels.iter().position(Option::is_none);
    let ignore_light = c >= 16.0 && light.is_some_and(|l| q_hat[l] < 2.0 * eps / c);
    let eps_cond = eps * (1.0 - 1.0 / c) - if ignore_light { 8.0 * eps / c } else { 0.0 };

    let mut candidates = Vec::new();
    for a in 0..b_cats {
        let name = category_name(cats.levels[a]);
        let size = cats.members[a].len();
        let mut rec = StageRecord::new(format!("{name}/mass"))
            .with("q_hat", q_hat[a])
            .with("p_hat", p_hat[a])
            .with("bins", size as f64);
        if (ignore_light && Some(a) == light) || size < 2 || q_hat[a] <= eps_cond / 2.0 {
            recs.push(rec.with("skipped", 1.0));
            continue;
        }
        let ok = p_hat[a] >= q_hat[a] / 2.0 && p_hat[a] <= 2.0 * q_hat[a];
        rec = rec.answered(Answer::from_accept(ok));
        recs.push(rec);
        if !ok {
            return Ok(Round::Done(false));
        }
        candidates.push(a);
    }

    let mut plans = Vec::new();
    let mut weights = Vec::new();
    for &a in &candidates {
        let name = category_name(cats.levels[a]);
        let size = cats.members[a].len();
        let index = subset_index(n, &cats.members[a]);
        let nq = l2_norm_estimate_with(
            &mut RejectionOracle::new(&mut *q, &index, size, q_hat[a]),
            size,
            est_fail,
            &params.l2,
            rng,
        )?;
        let np = l2_norm_estimate_with(
            &mut RejectionOracle::new(&mut *p, &index, size, q_hat[a]),
            size,
            est_fail,
            &params.l2,
            rng,
        )?;
        let (lo, hi) = if np < nq { (np, nq) } else { (nq, np) };
        let mismatch = hi > NORM_MISMATCH_FACTOR * lo;
        let mut rec = StageRecord::new(format!("{name}/norms"))
            .with("p", np)
            .with("q", nq);
        if mismatch {
            rec = rec.answered(Answer::No);
        }
        recs.push(rec);
        if mismatch {
            return Ok(Round::Done(false));
        }
        let b = 2.0 * hi;
        weights.push((b * size as f64 * q_hat[a]).cbrt());
        plans.push(Planned {
            index,
            size,
            mass: q_hat[a],
            radius: 0.0,
            b,
            name,
        });
    }
    let w_total: f64 = weights.iter().sum();
    let reps = majority_reps(1.0 / (10.0 * b_cats as f64), params.l2.base_error) as f64;
    let mut planned = marg_cost;
    let mut active = Vec::new();
    for (mut plan, w) in plans.into_iter().zip(weights) {
        let eps_a = (w / w_total) * eps_cond / plan.mass;
        if eps_a >= 2.0 {
            recs.push(
                StageRecord::new(format!("{}/l2", plan.name))
                    .with("eps", eps_a)
                    .with("skipped", 1.0),
            );
            continue;
        }
        plan.radius = eps_a / (plan.size as f64).sqrt();
        planned +=
            2.0 * reps * params.l2.c_sample * plan.b / (plan.radius * plan.radius) / plan.mass;
        active.push(plan);
    }
    recs.push(
        StageRecord::new("plan")
            .with("spent", spent(p, q))
            .with("planned", planned)
            .with("eps_cond", eps_cond),
    );
    if spent(p, q) + planned > allowance {
        recs.push(
            StageRecord::new("abort")
                .with("spent", spent(p, q))
                .with("planned", planned),
        );
        return Ok(Round::Abort);
    }

    if b_cats > 1 {
        let mut pl = LabelOracle::new(&mut *p, &cats.label, b_cats);
        let mut ql = LabelOracle::new(&mut *q, &cats.label, b_cats);
        let (ok, r) = closeness_stage(
            &mut pl,
            &mut ql,
            b_cats,
            eps_marg,
            b_cats as f64,
            0.1,
            params,
            rng,
        )?;
        recs.extend(prefixed("marginal", r));
        if !ok {
            return Ok(Round::Done(false));
        }
    }
    for plan in &active {
        let mut pr = RejectionOracle::new(&mut *p, &plan.index, plan.size, plan.mass);
        let mut qr = RejectionOracle::new(&mut *q, &plan.index, plan.size, plan.mass);
        let fail = 1.0 / (10.0 * b_cats as f64);
        let (ok, r) = l2_radius_test(&mut pr, &mut qr, plan.radius, plan.b, fail, &params.l2, rng)?;
        recs.extend(prefixed(&plan.name, r));
        if !ok {
            return Ok(Round::Done(false));
        }
    }
    Ok(Round::Done(true))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dist_core::DistributionOracle;
    use crate::rng::rng_from_seed;

    #[test]
    fn split_size_example() {
        assert_eq!(default_split_size(100, 0.5), 55.0);
        assert_eq!(default_split_size(100, 0.05), 100.0);
    }

    #[test]
    fn small_mass_profile_examples() {
        let q = ExplicitDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let (c, s) = q_small_mass_profile(&q, 4.0);
        assert_eq!(c, 1);
        assert!((s - 0.2).abs() < 1e-15);
        let (c, s) = q_small_mass_profile(&q, 1.5);
        assert_eq!(c, 3);
        assert!((s - (0.25f64 + 0.09 + 0.04).sqrt()).abs() < 1e-15);
        let u = ExplicitDistribution::uniform(50);
        assert_eq!(q_small_mass_profile(&u, 100.0), (0, 0.0));
    }

    #[test]
    fn categories_cover_domain() {
        let q =
            Arc::new(ExplicitDistribution::new(vec![0.5, 0.25, 0.125, 0.125, 0.0, 0.0]).unwrap());
        let mut o = DistributionOracle::new(q, 3);
        let cats = categorize(&mut o, 6, 400, 5.0).unwrap();
        let mut seen: Vec<usize> = cats.members.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        for (a, bins) in cats.members.iter().enumerate() {
            for &i in bins {
                assert_eq!(cats.label[i] as usize, a);
            }
        }
        assert_eq!(cats.levels[0], None);
        assert!(cats.members[0].contains(&4));
    }

    #[test]
    fn unequal_with_large_m1_matches_equal() {
        let params = Params::default();
        let q = Arc::new(ExplicitDistribution::uniform(100));
        for seed in 0..5 {
            let mut p1 = DistributionOracle::new(q.clone(), 10 + seed);
            let mut q1 = DistributionOracle::new(q.clone(), 20 + seed);
            let a = closeness_equal_k(
                &mut p1,
                &mut q1,
                100,
                0.5,
                100.0,
                &params,
                &mut rng_from_seed(seed),
            )
            .unwrap();
            let mut p2 = DistributionOracle::new(q.clone(), 10 + seed);
            let mut q2 = DistributionOracle::new(q.clone(), 20 + seed);
            let b = closeness_unequal(
                &mut q2,
                &mut p2,
                100,
                0.5,
                1000,
                &params,
                &mut rng_from_seed(seed),
            )
            .unwrap();
            assert_eq!(a.answer, b.answer);
            assert_eq!(a.samples_for("p"), b.samples_for("p"));
            assert_eq!(a.samples_for("q"), b.samples_for("q"));
        }
    }

    #[test]
    fn usage_matches_counters() {
        let params = Params::default();
        let d = Arc::new(ExplicitDistribution::uniform(200));
        let mut p = DistributionOracle::new(d.clone(), 1);
        let mut q = DistributionOracle::new(d, 2);
        let v = closeness_equal(&mut p, &mut q, 200, 0.5, &params, &mut rng_from_seed(4)).unwrap();
        assert_eq!(v.samples_for("p"), Some(p.samples_drawn()));
        assert_eq!(v.samples_for("q"), Some(q.samples_drawn()));
    }
}
