//! Testers built by composing the split reduction with the l2 core.
//!
//! Every public tester takes its unknown distributions as
//! [`SampleOracle`](crate::dist_core::SampleOracle)s, a constant set
//! [`Params`], and an explicit random source, and returns a [`TestVerdict`]
//! whose per-oracle sample counts match the oracle counters exactly.

mod closeness;
mod collection;
mod hellinger;
mod histogram;
mod identity;
mod independence;
pub(crate) mod oracles;
mod params;
mod verdict;

pub use closeness::{
    closeness_adaptive, closeness_equal, closeness_equal_k, closeness_unequal, q_small_mass_profile,
};
pub use collection::{collection_query, query_schedule};
pub use hellinger::{hellinger_closeness, hellinger_uses_categories};
pub use histogram::{k_histogram, IntervalPartition};
pub use identity::{bucket_index, identity_instance_optimal, identity_known, BucketIndex};
pub use independence::{
    collection_sampling, greedy_partition, independence_2d, independence_dd, product_test,
    PartSplit, ProductTestSpec,
};
pub use params::{Params, DEFAULT_CONSTANTS};
pub use verdict::{Answer, OracleUsage, StageRecord, TestVerdict};

pub(crate) use verdict::Trace;

use crate::error::{invalid, Result};
use crate::l2_engine::{majority, majority_reps};

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 2.0 {
        Ok(())
    } else {
        invalid(format!("epsilon {eps} outside (0, 2]"))
    }
}

pub(crate) type StageResult = Result<(bool, Vec<StageRecord>)>;

/// Majority vote over enough independent runs to push the error below `fail_prob`.
pub(crate) fn amplified<F>(fail_prob: f64, params: &Params, mut run: F) -> StageResult
where
    F: FnMut(f64) -> StageResult,
{
    let reps = majority_reps(fail_prob, params.l2.base_error);
    if reps == 1 {
        return run(fail_prob);
    }
    let mut yes = 0;
    let mut recs = Vec::new();
    for t in 0..reps {
        let (ok, r) = run(params.l2.base_error)?;
        yes += ok as usize;
        for mut rec in r {
            rec.stage = format!("rep{t}/{}", rec.stage);
            recs.push(rec);
        }
    }
    let accept = majority(yes, reps);
    recs.push(
        StageRecord::new("majority")
            .with("reps", reps as f64)
            .with("yes_votes", yes as f64)
            .answered(Answer::from_accept(accept)),
    );
    Ok((accept, recs))
}

pub(crate) fn prefixed(prefix: &str, recs: Vec<StageRecord>) -> Vec<StageRecord> {
    recs.into_iter()
        .map(|mut r| {
            r.stage = format!("{prefix}/{}", r.stage);
            r
        })
        .collect()
}
