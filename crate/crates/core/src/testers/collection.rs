use std::cell::RefCell;

use rand::Rng;

use crate::dist_core::SampleOracle;
use crate::error::{invalid, Error, Result};
use crate::rng::{fork, TestRng};

use super::closeness::{closeness_stage, default_split_size};
use super::{amplified, check_eps, Answer, Params, StageRecord, TestVerdict, Trace};

/// Levels `k = 0..=ceil(log2 m)` with `ceil(2^{5k/4} c)` picks each.
pub fn query_schedule(m: usize, c: f64) -> Vec<(u32, usize)> {
    let top = (m.max(1) as f64).log2().ceil() as u32;
    (0..=top)
        .map(|k| (k, (2f64.powf(1.25 * k as f64) * c).ceil() as usize))
        .collect()
}

/// Draws from the uniform mixture of the family.
struct Mixture<'a, O> {
    cell: &'a RefCell<&'a mut [O]>,
    rng: TestRng,
    drawn: u64,
}

impl<O: SampleOracle> SampleOracle for Mixture<'_, O> {
    fn domain_size(&self) -> usize {
        self.cell.borrow()[0].domain_size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        self.drawn += 1;
        let mut v = self.cell.borrow_mut();
        let i = self.rng.random_range(0..v.len());
        v[i].next_sample()
    }
    fn samples_drawn(&self) -> u64 {
        self.drawn
    }
}

struct Member<'a, O> {
    cell: &'a RefCell<&'a mut [O]>,
    index: usize,
    drawn: u64,
}

impl<O: SampleOracle> SampleOracle for Member<'_, O> {
    fn domain_size(&self) -> usize {
        self.cell.borrow()[self.index].domain_size()
    }
    fn next_sample(&mut self) -> Result<usize> {
        self.drawn += 1;
        self.cell.borrow_mut()[self.index].next_sample()
    }
    fn samples_drawn(&self) -> u64 {
        self.drawn
    }
}

/// Collection in the query model: is every `q_i` equal to the mixture `q*`,
/// or is the average `||q_i - q*||_1` at least eps? At level k a batch of
/// random members is compared with `q*` at distance `2^{k-1} eps`; levels
/// where that distance reaches 2 are vacuous and skipped.
pub fn collection_query<O, R>(
    oracles: &mut [O],
    n: usize,
    eps: f64,
    params: &Params,
    rng: &mut R,
) -> Result<TestVerdict>
where
    O: SampleOracle,
    R: Rng + ?Sized,
{
    check_eps(eps)?;
    if oracles.is_empty() {
        return invalid("empty collection");
    }
    for o in oracles.iter() {
        if o.domain_size() != n {
            return Err(Error::DimensionMismatch(n, o.domain_size()));
        }
    }
    let m = oracles.len();
    let before: Vec<u64> = oracles.iter().map(|o| o.samples_drawn()).collect();
    let c = params.coll_c;
    let mut t = Trace::default();
    let mut accept = true;
    {
        let cell = RefCell::new(&mut *oracles);
        let mut mix = Mixture {
            cell: &cell,
            rng: fork(rng),
            drawn: 0,
        };
        'levels: for (k, picks) in query_schedule(m, c) {
            let eps_k = 2f64.powi(k as i32 - 1) * eps;
            let fail = 1.0 / (c * c * 6f64.powi(k as i32));
            let mut rec = StageRecord::new(format!("level{k}"))
                .with("picks", picks as f64)
                .with("eps", eps_k)
                .with("fail", fail);
            if eps_k >= 2.0 {
                t.push(rec.with("skipped", 1.0));
                continue;
            }
            t.push(rec.clone());
            for pick in 0..picks {
                let index = rng.random_range(0..m);
                let mut member = Member {
                    cell: &cell,
                    index,
                    drawn: 0,
                };
                let (ok, recs) = amplified(fail, params, |f| {
                    closeness_stage(
                        &mut member,
                        &mut mix,
                        n,
                        eps_k,
                        default_split_size(n, eps_k),
                        f,
                        params,
                        rng,
                    )
                })?;
                if !ok {
                    rec = StageRecord::new(format!("level{k}/pick{pick}"))
                        .with("member", index as f64 + 1.0);
                    t.push(rec.answered(Answer::No));
                    t.extend(&format!("level{k}/pick{pick}"), recs);
                    accept = false;
                    break 'levels;
                }
            }
        }
    }
    let usage: Vec<(String, u64)> = oracles
        .iter()
        .zip(&before)
        .enumerate()
        .map(|(i, (o, b))| (format!("q{}", i + 1), o.samples_drawn() - b))
        .collect();
    let mut v = t.finish(Answer::from_accept(accept), Vec::new());
    v.samples_used = usage
        .into_iter()
        .map(|(oracle, samples)| super::OracleUsage { oracle, samples })
        .collect();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_16() {
        let s = query_schedule(16, 5.0);
        assert_eq!(
            s.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
        assert_eq!(s[0].1, 5);
        assert_eq!(s[1].1, (2f64.powf(1.25) * 5.0).ceil() as usize);
        assert_eq!(s[4].1, 160);
    }
}
