use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::dist_core::{condition, DistributionOracle, ExplicitDistribution, SampleOracle};
use crate::error::{Error, Result};
use crate::l2_engine::l2_min_radius_test;
use crate::rng::fork;
use crate::split_reduction::{split_explicit, split_map_from_known, SplitOracle};

use super::oracles::{subset_index, RejectionOracle};
use super::{check_eps, prefixed, Answer, Params, StageRecord, StageResult, TestVerdict, Trace};

fn check_domain<P: SampleOracle + ?Sized>(q: &ExplicitDistribution, p: &P) -> Result<()> {
    if p.domain_size() != q.n() {
        return Err(Error::DimensionMismatch(q.n(), p.domain_size()));
    }
    Ok(())
}

/// Identity to a known q: split by `a_i = 1 + floor(n q_i)` so `||q_S||_2 = O(1/sqrt n)`,
/// then run the l2 tester on `(p_S, q_S)`.
pub fn identity_known<P, R>(
    q: &ExplicitDistribution,
    p: &mut P,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    check_domain(q, p)?;
    let p0 = p.samples_drawn();
    let (accept, recs) = identity_known_stage(q, p, eps, params.fail_prob, params, rng)?;
    let mut t = Trace::default();
    t.extend("identity_known", recs);
    Ok(t.finish(
        Answer::from_accept(accept),
        vec![("p", p.samples_drawn() - p0)],
    ))
}

pub(crate) fn identity_known_stage<P, R>(
    q: &ExplicitDistribution,
    p: &mut P,
    eps: f64,
    fail_prob: f64,
    params: &Params,
    rng: &mut R,
) -> StageResult
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let sm = split_map_from_known(q);
    let n_split = sm.n_split();
    let mut qo = DistributionOracle::new(Arc::new(split_explicit(q, &sm)?), rng.next_u64());
    let mut po = SplitOracle::new(&mut *p, &sm, fork(rng))?;
    let mut recs = vec![StageRecord::new("split")
        .with("n_split", n_split as f64)
        .with("b_given", 2.0 / (n_split as f64).sqrt())];
    let radius = eps / (n_split as f64).sqrt();
    let (accept, more) = l2_min_radius_test(
        &mut po, &mut qo, n_split, radius, fail_prob, &params.l2, rng,
    )?;
    recs.extend(more);
    Ok((accept, recs))
}

/// Mass level of each bin: `j` with `q_i in (2^{-j-1}, 2^{-j}]` for
/// `j <= k_max = ceil(2 log2(10 n / eps))`, otherwise the infinite level
/// (`None`), which holds every bin below `2^{-k_max-1}` and zero bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BucketIndex {
    pub k_max: u32,
    pub levels: Vec<Option<u32>>,
}

impl BucketIndex {
    /// Bins per level, finite levels ascending, then the infinite level.
    pub fn groups(&self) -> (BTreeMap<u32, Vec<usize>>, Vec<usize>) {
        let mut finite: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut inf = Vec::new();
        for (i, l) in self.levels.iter().enumerate() {
            match l {
                Some(j) => finite.entry(*j).or_default().push(i),
                None => inf.push(i),
            }
        }
        (finite, inf)
    }
}

fn pow2_neg(j: i64) -> f64 {
    2f64.powi(-(j as i32))
}

pub(crate) fn level_of(x: f64, k_max: u32) -> Option<u32> {
    if x <= 0.0 {
        return None;
    }
    let mut j = (-x.log2()).floor() as i64;
    while x > pow2_neg(j) {
        j -= 1;
    }
    while x <= pow2_neg(j + 1) {
        j += 1;
    }
    if j < 0 || j > k_max as i64 {
        None
    } else {
        Some(j as u32)
    }
}

pub fn bucket_index(q: &ExplicitDistribution, eps: f64) -> BucketIndex {
    let k_max = (2.0 * (10.0 * q.n() as f64 / eps).log2()).ceil() as u32;
    BucketIndex {
        k_max,
        levels: q.probs().iter().map(|&x| level_of(x, k_max)).collect(),
    }
}

/// Instance-optimal identity: per mass level, a mass check on `p(S_j)` and an
/// l2 test of `(p|S_j)` against `(q|S_j)` through rejection sampling.
///
/// The `log(n/eps)` split of the distance budget is replaced by the number of
/// non-empty levels, which never exceeds it.
pub fn identity_instance_optimal<P, R>(
    q: &ExplicitDistribution,
    p: &mut P,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    check_domain(q, p)?;
    let p0 = p.samples_drawn();
    let n = q.n();
    let buckets = bucket_index(q, eps);
    let (finite, inf) = buckets.groups();
    let lambda = finite.len().max(1) as f64;
    let log_term = (n as f64 / eps).log2().max(2.0);
    let stage_fail = 1.0 / (log_term * log_term);
    let tau = eps / (params.inst_mass_tol * lambda);

    let mut t = Trace::default();
    t.push(
        StageRecord::new("buckets")
            .with("k_max", buckets.k_max as f64)
            .with("levels", finite.len() as f64)
            .with("inf_bins", inf.len() as f64)
            .with("stage_fail", stage_fail),
    );

    // Mass check: one batch estimates every p(S_j) at once.
    let mut groups: Vec<(String, Vec<usize>)> = finite
        .iter()
        .map(|(j, b)| (format!("level{j}"), b.clone()))
        .collect();
    if !inf.is_empty() {
        groups.push(("level_inf".to_string(), inf.clone()));
    }
    let mut label = vec![0u32; n];
    let mut q_mass = vec![0.0; groups.len()];
    for (g, (_, bins)) in groups.iter().enumerate() {
        for &i in bins {
            label[i] = g as u32;
            q_mass[g] += q.probs()[i];
        }
    }
    let spread = q_mass
        .iter()
        .map(|&x| x.min(1.0 - x).max(0.0))
        .fold(0.0, f64::max);
    let draws = (0.5 * (2.0 * groups.len() as f64 / stage_fail).ln() * (spread + tau) / (tau * tau))
        .ceil() as u64;
    let mut hits = vec![0u64; groups.len()];
    for _ in 0..draws {
        hits[label[p.next_sample()?] as usize] += 1;
    }
    let window = params.inst_mass_window * tau;
    let mut mass_ok = true;
    for (g, (name, _)) in groups.iter().enumerate() {
        let est = hits[g] as f64 / draws as f64;
        let ok = (est - q_mass[g]).abs() <= window;
        mass_ok &= ok;
        t.push(
            StageRecord::new(format!("{name}/mass"))
                .with("p_hat", est)
                .with("q_mass", q_mass[g])
                .with("window", window)
                .with("draws", draws as f64)
                .answered(Answer::from_accept(ok)),
        );
    }
    if !mass_ok {
        return Ok(t.finish(Answer::No, vec![("p", p.samples_drawn() - p0)]));
    }

    for (j, bins) in &finite {
        let qj: f64 = bins.iter().map(|&i| q.probs()[i]).sum();
        let eps_j = eps / (params.inst_eps_split * lambda * qj);
        let name = format!("level{j}");
        if bins.len() < 2 || eps_j >= 2.0 {
            t.push(
                StageRecord::new(format!("{name}/conditional"))
                    .with("eps", eps_j)
                    .with("bins", bins.len() as f64)
                    .with("skipped", 1.0),
            );
            continue;
        }
        let cond_q = Arc::new(condition(q, bins)?);
        let mut qo = DistributionOracle::new(cond_q, rng.next_u64());
        let index = subset_index(n, bins);
        let mut po = RejectionOracle::new(&mut *p, &index, bins.len(), qj);
        let radius = eps_j / (bins.len() as f64).sqrt();
        let (ok, recs) = l2_min_radius_test(
            &mut po,
            &mut qo,
            bins.len(),
            radius,
            stage_fail,
            &params.l2,
            rng,
        )?;
        t.push(
            StageRecord::new(format!("{name}/conditional"))
                .with("eps", eps_j)
                .with("bins", bins.len() as f64)
                .with("q_mass", qj),
        );
        for r in prefixed(&name, recs) {
            t.push(r);
        }
        if !ok {
            return Ok(t.finish(Answer::No, vec![("p", p.samples_drawn() - p0)]));
        }
    }
    Ok(t.finish(Answer::Yes, vec![("p", p.samples_drawn() - p0)]))
}
