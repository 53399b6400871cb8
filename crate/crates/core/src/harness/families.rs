use std::sync::Arc;

use rand::Rng;

use crate::dist_core::{DistributionOracle, ExplicitDistribution, JointDistribution};
use crate::error::{invalid, Error, Result};
use crate::hard_instances::{
    heavy_light_yes_no_2d, hellinger_pair, histogram_hard_pair, paninski_pair, product_yes_no_2d,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::testers::{
    closeness_adaptive, closeness_equal, closeness_unequal, collection_query, collection_sampling,
    hellinger_closeness, identity_instance_optimal, identity_known, independence_2d,
    independence_dd, k_histogram, Answer, IntervalPartition, Params, TestVerdict,
};

use super::GridCell;

pub const TESTERS: &[&str] = &[
    "identity_known",
    "identity_instance_optimal",
    "closeness_equal",
    "closeness_unequal",
    "closeness_adaptive",
    "hellinger_closeness",
    "independence_2d",
    "independence_dd",
    "collection_sampling",
    "collection_query",
    "k_histogram",
    "coin",
    "constant_budget",
];

pub const FAMILIES: &[&str] = &[
    "paninski",
    "chi2_tilt",
    "point_tail",
    "two_level",
    "product_2d",
    "heavy_light_2d",
    "product_3d",
    "collection_marginal",
    "collection_mixture",
    "hellinger",
    "histogram",
];

/// One generated instance: everything a trial needs to build its oracles.
#[derive(Debug, Clone)]
pub enum Instance {
    /// `p` is unknown; `q` is known to identity testers and sampled by the others.
    Pair {
        p: Arc<ExplicitDistribution>,
        q: Arc<ExplicitDistribution>,
    },
    Joint {
        p: Arc<ExplicitDistribution>,
        dims: Vec<usize>,
        marginal2: Option<ExplicitDistribution>,
    },
    Collection {
        members: Vec<Arc<ExplicitDistribution>>,
    },
    Histogram {
        p: Arc<ExplicitDistribution>,
        part: IntervalPartition,
    },
}

/// The distance parameter a tester should use on a family generated at `eps`:
/// no larger than the farness the family certifies for NO draws.
pub fn test_eps(family: &str, eps: f64) -> f64 {
    match family {
        "product_2d" | "product_3d" | "collection_marginal" | "hellinger" | "histogram" => {
            eps / 2.0
        }
        "heavy_light_2d" => eps / 4.0,
        _ => eps,
    }
}

pub fn two_level(n: usize) -> Result<ExplicitDistribution> {
    let heavy = (n as f64).sqrt().round() as usize;
    if heavy == 0 || heavy >= n {
        return invalid("two-level family needs n >= 4");
    }
    let mut q = vec![0.5 / (n - heavy) as f64; n];
    q[..heavy].fill(0.5 / heavy as f64);
    ExplicitDistribution::new(q)
}

pub fn point_tail(n: usize) -> Result<ExplicitDistribution> {
    if n < 2 {
        return invalid("point-plus-tail family needs n >= 2");
    }
    let mut q = vec![1.0 / (n as f64 * (n - 1) as f64); n];
    q[0] = 1.0 - 1.0 / n as f64;
    ExplicitDistribution::new(q)
}

/// Moves mass onto bin 0 so that `chi^2(p, q) = target` exactly.
pub fn chi2_tilt(q: &ExplicitDistribution, target: f64) -> Result<ExplicitDistribution> {
    let q0 = q.probs()[0];
    let delta = (target * q0 * (1.0 - q0)).sqrt();
    if delta > 1.0 - q0 {
        return invalid("tilt too large");
    }
    let shrink = 1.0 - delta / (1.0 - q0);
    let mut p: Vec<f64> = q.probs().iter().map(|x| x * shrink).collect();
    p[0] = q0 + delta;
    ExplicitDistribution::new(p)
}

/// Paired `+-delta` moves among `bins`, total l1 change `eps`.
fn perturb_pairs<R: Rng + ?Sized>(
    p: &mut [f64],
    bins: &[usize],
    eps: f64,
    rng: &mut R,
) -> Result<()> {
    let pairs = bins.len() / 2;
    if pairs == 0 {
        return invalid("need at least two bins to perturb");
    }
    let delta = eps / (2 * pairs) as f64;
    for t in 0..pairs {
        let (a, b) = (bins[2 * t], bins[2 * t + 1]);
        let s = if rng.random::<bool>() { delta } else { -delta };
        if p[a] - delta < 0.0 || p[b] - delta < 0.0 {
            return invalid("perturbation exceeds bin mass");
        }
        p[a] += s;
        p[b] -= s;
    }
    Ok(())
}

fn arc(d: ExplicitDistribution) -> Arc<ExplicitDistribution> {
    Arc::new(d)
}

fn cell_k(cell: &GridCell) -> usize {
    cell.k.max(1)
}

pub fn generate<R: Rng + ?Sized>(
    family: &str,
    cell: &GridCell,
    label: Answer,
    rng: &mut R,
) -> Result<Instance> {
    let (n, m, eps) = (cell.n, cell.m, cell.eps);
    let yes = label == Answer::Yes;
    Ok(match family {
        "paninski" => {
            let (u, p) = paninski_pair(n, eps, rng)?;
            let u = arc(u);
            Instance::Pair {
                p: if yes { u.clone() } else { arc(p) },
                q: u,
            }
        }
        "chi2_tilt" => {
            let u = ExplicitDistribution::uniform(n);
            let p = if yes {
                chi2_tilt(&u, eps * eps / 20.0)?
            } else {
                paninski_pair(n, eps, rng)?.1
            };
            Instance::Pair {
                p: arc(p),
                q: arc(u),
            }
        }
        "point_tail" => {
            let q = point_tail(n)?;
            let p = if yes {
                q.clone()
            } else {
                let mut v = q.probs().to_vec();
                v[0] -= eps / 2.0;
                for x in &mut v[1..] {
                    *x += eps / (2.0 * (n - 1) as f64);
                }
                ExplicitDistribution::new(v)?
            };
            Instance::Pair {
                p: arc(p),
                q: arc(q),
            }
        }
        "two_level" => {
            let q = two_level(n)?;
            let p = if yes {
                q.clone()
            } else {
                let heavy = (n as f64).sqrt().round() as usize;
                let mut v = q.probs().to_vec();
                let light: Vec<usize> = (heavy..n).collect();
                perturb_pairs(&mut v, &light, eps, rng)?;
                ExplicitDistribution::new(v)?
            };
            Instance::Pair {
                p: arc(p),
                q: arc(q),
            }
        }
        "product_2d" => {
            let h = product_yes_no_2d(n, m, eps, rng, label)?;
            Instance::Joint {
                p: arc(h.distribution(0)?),
                dims: vec![n, m],
                marginal2: None,
            }
        }
        "heavy_light_2d" => {
            let h = heavy_light_yes_no_2d(n, m, cell_k(cell), eps, rng, label)?;
            Instance::Joint {
                p: arc(h.distribution(0)?),
                dims: vec![n, m],
                marginal2: None,
            }
        }
        "product_3d" => {
            let base = 1.0 / (n * n * n) as f64;
            let v: Vec<f64> = (0..n * n * n)
                .map(|_| {
                    if yes {
                        base
                    } else if rng.random::<bool>() {
                        base * (1.0 + eps)
                    } else {
                        base * (1.0 - eps)
                    }
                })
                .collect();
            Instance::Joint {
                p: arc(ExplicitDistribution::new(v)?),
                dims: vec![n, n, n],
                marginal2: None,
            }
        }
        "collection_marginal" => {
            // Rows weighted at random, columns exactly uniform in both labels.
            let rows: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
            let rows = ExplicitDistribution::from_weights(&rows)?;
            let cols = ExplicitDistribution::uniform(m);
            let mut v = JointDistribution::product(&[&rows, &cols])
                .into_flat()
                .into_probs();
            if !yes {
                // Opposite moves on paired rows keep every column sum fixed.
                for j in 0..m {
                    for t in 0..n / 2 {
                        let (a, b) = ((2 * t) * m + j, (2 * t + 1) * m + j);
                        let d = eps * v[a].min(v[b]);
                        let s = if rng.random::<bool>() { d } else { -d };
                        v[a] += s;
                        v[b] -= s;
                    }
                }
            }
            Instance::Joint {
                p: arc(ExplicitDistribution::new(v)?),
                dims: vec![n, m],
                marginal2: Some(cols),
            }
        }
        "collection_mixture" => {
            if m == 0 {
                return invalid("collection needs at least one member");
            }
            let u = arc(ExplicitDistribution::uniform(n));
            let gap = (2.5 * eps).min(1.0);
            let mut members = Vec::with_capacity(m);
            for i in 0..m {
                members.push(if yes || i < m / 2 {
                    u.clone()
                } else {
                    arc(paninski_pair(n, gap, rng)?.1)
                });
            }
            Instance::Collection { members }
        }
        "hellinger" => {
            let h = hellinger_pair(n, cell_k(cell), eps, rng, label)?;
            Instance::Pair {
                p: arc(h.distribution(0)?),
                q: arc(h.distribution(1)?),
            }
        }
        "histogram" => {
            let k = cell_k(cell);
            let h = histogram_hard_pair(n, k, eps, rng, label)?;
            Instance::Histogram {
                p: arc(h.distribution(0)?),
                part: IntervalPartition::equal(n, k)?,
            }
        }
        other => return Err(Error::Unknown(format!("instance family '{other}'"))),
    })
}

fn wrong(tester: &str, family: &str) -> Error {
    Error::InvalidArgument(format!("tester '{tester}' cannot run on family '{family}'"))
}

/// One trial: generate an instance with `label`, run the tester, return its
/// verdict. Seeds for the instance, each oracle and the tester all derive
/// from `seed`.
pub fn run_trial(
    tester: &str,
    family: &str,
    cell: &GridCell,
    label: Answer,
    params: &Params,
    seed: u64,
) -> Result<TestVerdict> {
    if !TESTERS.contains(&tester) {
        return Err(Error::Unknown(format!("tester '{tester}'")));
    }
    if tester == "coin" || tester == "constant_budget" {
        return Ok(synthetic(tester, label, params, seed));
    }
    let inst = generate(
        family,
        cell,
        label,
        &mut rng_from_seed(derive_seed(seed, &[0])),
    )?;
    let mut rng = rng_from_seed(derive_seed(seed, &[3]));
    let eps = test_eps(family, cell.eps);
    let oracle = |d: &Arc<ExplicitDistribution>, slot: u64| {
        DistributionOracle::new(d.clone(), derive_seed(seed, &[slot]))
    };
    match (tester, inst) {
        ("identity_known", Instance::Pair { p, q }) => {
            identity_known(&q, &mut oracle(&p, 1), eps, params, &mut rng)
        }
        ("identity_instance_optimal", Instance::Pair { p, q }) => {
            identity_instance_optimal(&q, &mut oracle(&p, 1), eps, params, &mut rng)
        }
        ("closeness_equal", Instance::Pair { p, q }) => closeness_equal(
            &mut oracle(&p, 1),
            &mut oracle(&q, 2),
            cell.n,
            eps,
            params,
            &mut rng,
        ),
        ("closeness_unequal", Instance::Pair { p, q }) => closeness_unequal(
            &mut oracle(&q, 2),
            &mut oracle(&p, 1),
            cell.n,
            eps,
            cell.m.max(1) as u64,
            params,
            &mut rng,
        ),
        ("closeness_adaptive", Instance::Pair { p, q }) => closeness_adaptive(
            &mut oracle(&p, 1),
            &mut oracle(&q, 2),
            cell.n,
            eps,
            params,
            &mut rng,
        ),
        ("hellinger_closeness", Instance::Pair { p, q }) => hellinger_closeness(
            &mut oracle(&p, 1),
            &mut oracle(&q, 2),
            p.n(),
            eps,
            params,
            &mut rng,
        ),
        ("independence_2d", Instance::Joint { p, dims, .. }) if dims.len() == 2 => {
            independence_2d(&mut oracle(&p, 1), dims[0], dims[1], eps, params, &mut rng)
        }
        ("independence_dd", Instance::Joint { p, dims, .. }) => {
            independence_dd(&mut oracle(&p, 1), &dims, eps, params, &mut rng)
        }
        (
            "collection_sampling",
            Instance::Joint {
                p,
                dims,
                marginal2: Some(m2),
            },
        ) => collection_sampling(
            &mut oracle(&p, 1),
            &m2,
            dims[0],
            dims[1],
            eps,
            params,
            &mut rng,
        ),
        ("collection_query", Instance::Collection { members }) => {
            let mut os: Vec<DistributionOracle> = members
                .iter()
                .enumerate()
                .map(|(i, d)| oracle(d, 10 + i as u64))
                .collect();
            collection_query(&mut os, cell.n, eps, params, &mut rng)
        }
        ("k_histogram", Instance::Histogram { p, part }) => {
            k_histogram(&mut oracle(&p, 1), cell.n, &part, eps, params, &mut rng)
        }
        _ => Err(wrong(tester, family)),
    }
}

/// Controls with known behavior: `coin` answers YES with probability 1/2
/// whatever the label; `constant_budget` spends `1000 * c_sample / 20`
/// samples and errs with probability `exp(-c_sample / 20) / 2`.
fn synthetic(tester: &str, label: Answer, params: &Params, seed: u64) -> TestVerdict {
    let mut rng = rng_from_seed(derive_seed(seed, &[3]));
    let scale = params.l2.c_sample / 20.0;
    let (answer, samples) = if tester == "coin" {
        (Answer::from_accept(rng.random::<bool>()), 1)
    } else {
        let err = 0.5 * (-scale).exp();
        let correct = rng.random::<f64>() >= err;
        let truth = label == Answer::Yes;
        (
            Answer::from_accept(if correct { truth } else { !truth }),
            (1000.0 * scale).ceil() as u64,
        )
    };
    TestVerdict {
        answer,
        samples_used: vec![crate::testers::OracleUsage {
            oracle: "p".into(),
            samples,
        }],
        trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist_core::{chi_sq, l1_distance, SampleOracle};

    #[test]
    fn tilt_hits_target() {
        let u = ExplicitDistribution::uniform(100);
        let p = chi2_tilt(&u, 0.25 / 20.0).unwrap();
        assert!((chi_sq(&p, &u).unwrap() - 0.0125).abs() < 1e-12);
    }

    #[test]
    fn families_have_stated_distances() {
        let cell = GridCell {
            n: 100,
            m: 4,
            k: 10,
            eps: 0.25,
        };
        let mut rng = rng_from_seed(1);
        for fam in ["paninski", "point_tail", "two_level"] {
            let Instance::Pair { p, q } = generate(fam, &cell, Answer::No, &mut rng).unwrap()
            else {
                panic!()
            };
            assert!(
                (l1_distance(&*p, &*q).unwrap() - 0.25).abs() < 1e-9,
                "{fam}"
            );
            let Instance::Pair { p, q } = generate(fam, &cell, Answer::Yes, &mut rng).unwrap()
            else {
                panic!()
            };
            assert_eq!(p, q);
        }
    }

    #[test]
    fn collection_marginal_keeps_columns_uniform() {
        let cell = GridCell {
            n: 10,
            m: 4,
            k: 1,
            eps: 0.5,
        };
        let Instance::Joint { p, .. } = generate(
            "collection_marginal",
            &cell,
            Answer::No,
            &mut rng_from_seed(2),
        )
        .unwrap() else {
            panic!()
        };
        let j = JointDistribution::from_flat(vec![10, 4], (*p).clone()).unwrap();
        for x in j.marginal(1).probs() {
            assert!((x - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn trial_is_seed_deterministic() {
        let cell = GridCell {
            n: 100,
            m: 1,
            k: 1,
            eps: 0.5,
        };
        let params = Params::default();
        let a = run_trial("closeness_equal", "paninski", &cell, Answer::No, &params, 7).unwrap();
        let b = run_trial("closeness_equal", "paninski", &cell, Answer::No, &params, 7).unwrap();
        assert_eq!(a, b);
        assert!(run_trial("nope", "paninski", &cell, Answer::No, &params, 7).is_err());
        assert!(run_trial("k_histogram", "paninski", &cell, Answer::No, &params, 7).is_err());
        let _ =
            DistributionOracle::new(Arc::new(ExplicitDistribution::uniform(2)), 0).domain_size();
    }
}
