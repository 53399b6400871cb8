//! The l2 closeness core every tester reduces to.
//!
//! With Poissonized counts `X ~ Poi(m p_i)`, `Y ~ Poi(m q_i)` the statistic
//! `z = sum (X_i - Y_i)^2 - X_i - Y_i` has mean `m^2 ||p - q||_2^2`.

mod amplify;
mod counts;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist_core::{CountVector, SampleOracle};
use crate::error::{invalid, Error, Result};
use crate::testers::{Answer, StageRecord, TestVerdict, Trace};

pub(crate) use amplify::majority;
pub use amplify::{binomial_upper_tail, majority_reps};
pub(crate) use counts::{draw_counts, Counts};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2Statistic {
    pub z: i64,
    pub m: f64,
    pub n_bins: usize,
}

pub fn l2_statistic(x: &CountVector, y: &CountVector, m: f64) -> Result<L2Statistic> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch(x.n(), y.n()));
    }
    let z = counts::dense_z(
        x.counts().iter().map(|&c| c as i64),
        y.counts().iter().map(|&c| c as i64),
    );
    Ok(L2Statistic {
        z,
        m,
        n_bins: x.n(),
    })
}

/// `sum X_i (X_i - 1) / m^2`, an unbiased estimate of `||p||_2^2` under Poi(m).
pub fn collision_estimate(x: &CountVector, m: f64) -> f64 {
    Counts::from(x).collisions() as f64 / (m * m)
}

/// Constants hidden in the big-O of the l2 tester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L2Constants {
    /// Poisson parameter is `c_sample * b / r^2` for soundness radius `r`.
    pub c_sample: f64,
    /// Threshold position between the squared completeness and soundness radii.
    pub c_thresh: f64,
    /// Norm estimation draws up to `c_norm * sqrt(n)` per repetition.
    pub c_norm: f64,
    /// Assumed error of a single run when sizing majority votes.
    pub base_error: f64,
}

impl Default for L2Constants {
    fn default() -> Self {
        Self {
            c_sample: 20.0,
            c_thresh: 0.5,
            c_norm: 4.0,
            base_error: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2TestConfig {
    pub epsilon: f64,
    pub b: f64,
    pub fail_prob: f64,
    pub consts: L2Constants,
}

impl L2TestConfig {
    pub fn new(epsilon: f64, b: f64) -> Self {
        Self {
            epsilon,
            b,
            fail_prob: 1.0 / 3.0,
            consts: L2Constants::default(),
        }
    }

    pub fn with_consts(mut self, consts: L2Constants) -> Self {
        self.consts = consts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0) {
            return invalid(format!("epsilon {} outside (0, 2]", self.epsilon));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return invalid(format!("norm bound b = {} must be positive", self.b));
        }
        if !(self.fail_prob > 0.0 && self.fail_prob < 0.5) {
            return invalid(format!("fail_prob {} outside (0, 1/2)", self.fail_prob));
        }
        let c = &self.consts;
        if !(c.c_sample > 0.0 && c.c_norm > 0.0 && (0.0..=1.0).contains(&c.c_thresh)) {
            return invalid("l2 constants out of range");
        }
        if !(c.base_error > 0.0 && c.base_error < 0.5) {
            return invalid("base_error outside (0, 1/2)");
        }
        Ok(())
    }
}

/// Robust l2 test in radius form: accepts when `||p - q||_2 <= r/2`,
/// rejects when `||p - q||_2 >= r`, given `b >= max(||p||_2, ||q||_2)`.
pub(crate) fn l2_radius_test<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    radius: f64,
    b: f64,
    fail_prob: f64,
    c: &L2Constants,
    rng: &mut R,
) -> Result<(bool, Vec<StageRecord>)>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let m = c.c_sample * b / (radius * radius);
    let threshold = m * m * radius * radius * (0.25 + 0.75 * c.c_thresh);
    let reps = majority_reps(fail_prob, c.base_error);
    let mut yes = 0;
    let mut rec = StageRecord::new("l2")
        .with("m", m)
        .with("threshold", threshold)
        .with("b", b)
        .with("radius", radius);
    for _ in 0..reps {
        let x = draw_counts(p, m, rng)?;
        let y = draw_counts(q, m, rng)?;
        let z = counts::z_stat(&x, &y);
        if reps == 1 {
            rec = rec.with("z", z as f64);
        }
        if (z as f64) <= threshold {
            yes += 1;
        }
    }
    if reps > 1 {
        rec = rec.with("reps", reps as f64).with("yes_votes", yes as f64);
    }
    let accept = majority(yes, reps);
    Ok((accept, vec![rec.answered(Answer::from_accept(accept))]))
}

fn usage<P: SampleOracle + ?Sized, Q: SampleOracle + ?Sized>(
    p: &P,
    q: &Q,
    p0: u64,
    q0: u64,
) -> Vec<(&'static str, u64)> {
    vec![("p", p.samples_drawn() - p0), ("q", q.samples_drawn() - q0)]
}

fn check_domain<P: SampleOracle + ?Sized, Q: SampleOracle + ?Sized>(
    p: &P,
    q: &Q,
    n: usize,
) -> Result<()> {
    if p.domain_size() != n {
        return Err(Error::DimensionMismatch(n, p.domain_size()));
    }
    if q.domain_size() != n {
        return Err(Error::DimensionMismatch(n, q.domain_size()));
    }
    Ok(())
}

/// Distinguishes `||p-q||_2 <= eps/(2 sqrt n)` from `||p-q||_2 >= eps/sqrt n`
/// with `Poi(c_sample * b * n / eps^2)` draws per repetition.
pub fn l2_closeness_test<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    cfg: &L2TestConfig,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    check_domain(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let radius = cfg.epsilon / (n as f64).sqrt();
    let (accept, recs) = l2_radius_test(p, q, radius, cfg.b, cfg.fail_prob, &cfg.consts, rng)?;
    let mut t = Trace::default();
    t.extend("l2_closeness", recs);
    Ok(t.finish(Answer::from_accept(accept), usage(p, q, p0, q0)))
}

pub fn l2_norm_estimate<P, R>(p: &mut P, n: usize, fail_prob: f64, rng: &mut R) -> Result<f64>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    l2_norm_estimate_with(p, n, fail_prob, &L2Constants::default(), rng)
}

/// Factor-2 estimate of `||p||_2` from collision counts, never below `1/sqrt n`.
///
/// The Poisson parameter doubles from `c_norm` until enough collisions are
/// seen (or it reaches `c_norm * sqrt n`), then a median over fresh
/// repetitions at four times that size gives the estimate.
pub fn l2_norm_estimate_with<P, R>(
    p: &mut P,
    n: usize,
    fail_prob: f64,
    c: &L2Constants,
    rng: &mut R,
) -> Result<f64>
where
    P: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    if !(fail_prob > 0.0 && fail_prob < 1.0) {
        return invalid("fail_prob outside (0, 1)");
    }
    let floor = 1.0 / (n.max(1) as f64).sqrt();
    let cap = c.c_norm * (n.max(1) as f64).sqrt();
    let target = (c.c_norm * c.c_norm / 2.0).max(2.0);
    let mut m = c.c_norm.min(cap);
    loop {
        if m >= cap {
            m = cap;
            break;
        }
        let x = draw_counts(p, m, rng)?;
        if x.collisions() as f64 >= target {
            break;
        }
        m *= 2.0;
    }
    // The search stops at the first size with enough collisions; quadruple
    // it so each repetition lands within a factor 2 with high probability.
    m = (4.0 * m).min(cap.max(m));
    let reps = majority_reps(fail_prob, c.base_error.max(0.05));
    let mut est = Vec::with_capacity(reps);
    for _ in 0..reps {
        let x = draw_counts(p, m, rng)?;
        est.push(x.collisions() as f64 / (m * m));
    }
    est.sort_by(|a, b| a.total_cmp(b));
    Ok(est[reps / 2].sqrt().max(floor))
}

/// Ratio of norm estimates beyond which p and q are declared different.
pub const NORM_MISMATCH_FACTOR: f64 = 8.0;

pub(crate) fn l2_min_radius_test<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n_bins: usize,
    radius: f64,
    fail_prob: f64,
    c: &L2Constants,
    rng: &mut R,
) -> Result<(bool, Vec<StageRecord>)>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    let est_fail = fail_prob / 8.0;
    let np = l2_norm_estimate_with(p, n_bins, est_fail, c, rng)?;
    let nq = l2_norm_estimate_with(q, n_bins, est_fail, c, rng)?;
    let (lo, hi) = if np < nq { (np, nq) } else { (nq, np) };
    let mut recs = vec![StageRecord::new("norms").with("p", np).with("q", nq)];
    if hi > NORM_MISMATCH_FACTOR * lo {
        recs[0].answer = Some(Answer::No);
        return Ok((false, recs));
    }
    // Each estimate is within a factor 2, so 2 * larger bounds both norms.
    let b_eff = 2.0 * hi;
    let (accept, more) = l2_radius_test(p, q, radius, b_eff, fail_prob * 0.75, c, rng)?;
    recs.extend(more);
    Ok((accept, recs))
}

/// l2 test needing only `b >= min(||p||_2, ||q||_2)`: estimate both norms,
/// reject on a factor-8 mismatch, otherwise run the l2 test with an
/// estimated bound on the larger norm.
pub fn l2_closeness_test_min<P, Q, R>(
    p: &mut P,
    q: &mut Q,
    n: usize,
    cfg: &L2TestConfig,
    rng: &mut R,
) -> Result<TestVerdict>
where
    P: SampleOracle + ?Sized,
    Q: SampleOracle + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    check_domain(p, q, n)?;
    let (p0, q0) = (p.samples_drawn(), q.samples_drawn());
    let radius = cfg.epsilon / (n as f64).sqrt();
    let (accept, recs) = l2_min_radius_test(p, q, n, radius, cfg.fail_prob, &cfg.consts, rng)?;
    let mut t = Trace::default();
    t.push(StageRecord::new("l2_min").with("b_given", cfg.b));
    t.extend("l2_min", recs);
    Ok(t.finish(Answer::from_accept(accept), usage(p, q, p0, q0)))
}
