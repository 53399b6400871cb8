use rand::Rng;

use crate::dist_core::SampleOracle;
use crate::error::{invalid, Result};
use crate::l2_engine::l2_min_radius_test;
use crate::rng::fork;

use super::closeness::{
    categorize, category_masses, category_name, check_pair, closeness_stage, default_split_size,
};
use super::oracles::{subset_index, LabelOracle, PaddedOracle, RejectionOracle};
use super::{prefixed, Answer, Params, StageRecord, TestVerdict, Trace};

/// True when `n^{2/3} eps^{-4/3} > n^{3/4} / eps`, i.e. the categorized
/// branch is cheaper than plain l1 closeness.
pub fn hellinger_uses_categories(n: usize, eps: f64) -> bool {
    (n as f64).powf(2.0 / 3.0) * eps.powf(-4.0 / 3.0) > n as f64
}

/// Distinguishes `p = q` from `H^2(p, q) >= eps`.
///
/// Small domains delegate to [`closeness_equal`](super::closeness_equal) since
/// `||p - q||_1 >= H^2`. Otherwise bins are categorized by a q-sample of size
/// about `m ln m` with `m = n^{3/4} / eps`; the light bins get a conditional
/// l1 test and each heavy level a padded l2 test, using
/// `H^2 <= (1/2) sum (p_i - q_i)^2 / q_i`.
pub fn hellinger_closeness<P, Q, R>(
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
    if !(eps > 0.0 && eps <= 1.0) {
        return invalid(format!("epsilon {eps} outside (0, 1]"));
    }
    check_pair(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let usage = |p: &P, q: &Q| vec![("p", p.samples_drawn() - p0), ("q", q.samples_drawn() - q0)];
    let mut t = Trace::default();
    if !hellinger_uses_categories(n, eps) {
        t.push(StageRecord::new("branch").with("categorized", 0.0));
        let (ok, recs) = closeness_stage(
            p,
            q,
            n,
            eps,
            default_split_size(n, eps),
            params.fail_prob,
            params,
            rng,
        )?;
        t.extend("closeness", recs);
        return Ok(t.finish(Answer::from_accept(ok), usage(p, q)));
    }

    let m = (n as f64).powf(0.75) / eps;
    let ln_m = m.ln().max(1.0);
    let n1 = (params.hell_cat_c * m * ln_m).ceil() as u64;
    let cats = categorize(&mut *q, n, n1, ln_m)?;
    let b_cats = cats.len();
    let stage_fail = 1.0 / (10.0 * b_cats as f64);
    let eps_a = eps / (params.hell_split_c * b_cats as f64);
    t.push(
        StageRecord::new("branch")
            .with("categorized", 1.0)
            .with("m", m)
            .with("draws", n1 as f64)
            .with("categories", b_cats as f64)
            .with("eps_category", eps_a),
    );

    if b_cats > 1 {
        let mut pl = LabelOracle::new(&mut *p, &cats.label, b_cats);
        let mut ql = LabelOracle::new(&mut *q, &cats.label, b_cats);
        let (ok, recs) = closeness_stage(
            &mut pl,
            &mut ql,
            b_cats,
            eps / params.hell_marg_c,
            b_cats as f64,
            0.1,
            params,
            rng,
        )?;
        t.extend("marginal", recs);
        if !ok {
            return Ok(t.finish(Answer::No, usage(p, q)));
        }
    }

    let conf = (40.0 * b_cats as f64).ln();
    let n_est = (32.0 * conf / eps_a).ceil() as u64;
    let q_hat = category_masses(&mut *q, &cats.label, b_cats, n_est)?;
    let pad = (params.hell_pad * n as f64).ceil() as usize;
    #[allow(clippy::needless_range_loop)]
    for a in 0..b_cats {
        let name = category_name(cats.levels[a]);
        let size = cats.members[a].len();
        let index = subset_index(n, &cats.members[a]);
        let ok = match cats.levels[a] {
            None => {
                let eps_cond = eps_a / q_hat[a].max(f64::MIN_POSITIVE);
                let rec = StageRecord::new(format!("{name}/conditional"))
                    .with("q_hat", q_hat[a])
                    .with("eps", eps_cond)
                    .with("bins", size as f64);
                if size < 2 || eps_cond >= 2.0 {
                    t.push(rec.with("skipped", 1.0));
                    continue;
                }
                t.push(rec);
                let mut pr = RejectionOracle::new(&mut *p, &index, size, q_hat[a]);
                let mut qr = RejectionOracle::new(&mut *q, &index, size, q_hat[a]);
                let (ok, recs) = closeness_stage(
                    &mut pr,
                    &mut qr,
                    size,
                    eps_cond,
                    default_split_size(size, eps_cond),
                    stage_fail,
                    params,
                    rng,
                )?;
                t.extend(&name, recs);
                ok
            }
            Some(j) => {
                // Bins hit at least 2^j times out of n1 draws have mass
                // about 2^j / n1; halve that for sampling noise.
                let x_min = 2f64.powi(j as i32) / (2.0 * n1 as f64);
                let radius = (2.0 * eps_a * x_min).sqrt();
                t.push(
                    StageRecord::new(format!("{name}/padded"))
                        .with("x_min", x_min)
                        .with("radius", radius)
                        .with("bins", size as f64),
                );
                let mut pp = PaddedOracle::new(&mut *p, &index, size, pad, fork(rng));
                let mut qp = PaddedOracle::new(&mut *q, &index, size, pad, fork(rng));
                let (ok, recs) = l2_min_radius_test(
                    &mut pp,
                    &mut qp,
                    size + pad,
                    radius,
                    stage_fail,
                    &params.l2,
                    rng,
                )?;
                for r in prefixed(&name, recs) {
                    t.push(r);
                }
                ok
            }
        };
        if !ok {
            return Ok(t.finish(Answer::No, usage(p, q)));
        }
    }
    Ok(t.finish(Answer::Yes, usage(p, q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_selection() {
        assert!(hellinger_uses_categories(1_000_000, 0.01));
        assert!(!hellinger_uses_categories(10_000, 0.3));
    }
}
