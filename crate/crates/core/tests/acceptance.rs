//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::time::Instant;

use rand::Rng;

use disttest::dist_core::{
    chi_sq, l1_distance, l2_distance, poissonized_counts, DistributionOracle, ExplicitDistribution,
};
use disttest::hard_instances::{mi_heavy_light_row, mi_per_bin};
use disttest::harness::{
    evaluate_cell, fit_complexity_exponent, min_budget_multiplier, write_csv, GridCell, PowerCell,
    CALIBRATION_TARGET, FIT_TARGET_ACCURACY,
};
use disttest::l2_engine::l2_statistic;
use disttest::rng::{derive_seed, rng_from_seed};
use disttest::split_reduction::{split_explicit, split_map_from_samples, SplitMap};
use disttest::testers::Params;

const MASTER: u64 = 20_261_016;
const BATTERY_TRIALS: usize = 500;
const RATE_FLOOR: f64 = 0.60;

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn random_dist<R: Rng>(n: usize, rng: &mut R) -> ExplicitDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    ExplicitDistribution::from_weights(&w).unwrap()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

fn c1_unbiased() -> Outcome {
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    let mut rng = rng_from_seed(derive_seed(MASTER, &[1]));
    for &n in &[10usize, 100] {
        for _ in 0..5 {
            let p = random_dist(n, &mut rng);
            let q = random_dist(n, &mut rng);
            let m = 2.0 * n as f64;
            let truth = l2_distance(&p, &q).unwrap().powi(2);
            let zs: Vec<f64> = (0..trials)
                .map(|_| {
                    let x = poissonized_counts(&p, m, &mut rng);
                    let y = poissonized_counts(&q, m, &mut rng);
                    l2_statistic(&x, &y, m).unwrap().z as f64 / (m * m)
                })
                .collect();
            let (mean, sd) = mean_sd(&zs);
            worst = worst.max((mean - truth).abs() / (sd / (trials as f64).sqrt()));
        }
    }
    Outcome {
        pass: worst <= 5.0,
        detail: format!(
            "worst |mean(z)/m^2 - ||p-q||^2| = {worst:.2} standard errors over 10 pairs (limit 5)"
        ),
    }
}

fn c2_split_exact() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(MASTER, &[2]));
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..60);
        let p = random_dist(n, &mut rng);
        let q = random_dist(n, &mut rng);
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(1..6)).collect();
        let sm = SplitMap::from_a(a).unwrap();
        let (ps, qs) = (
            split_explicit(&p, &sm).unwrap(),
            split_explicit(&q, &sm).unwrap(),
        );
        let d1 = (l1_distance(&ps, &qs).unwrap() - l1_distance(&p, &q).unwrap()).abs();
        let c = chi_sq(&p, &q).unwrap();
        let d2 = (chi_sq(&ps, &qs).unwrap() - c).abs() / c.max(1.0);
        worst = worst.max(d1).max(d2);
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!(
            "largest l1 / chi^2 discrepancy {worst:.2e} over 100 triples (limit 1e-12)"
        ),
    }
}

fn c3_split_norm() -> Outcome {
    let maps = 10_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(n, k)) in [(50usize, 25.0f64), (200, 100.0)].iter().enumerate() {
        let q = std::sync::Arc::new(ExplicitDistribution::uniform(n));
        let mut oracle = DistributionOracle::new(q.clone(), derive_seed(MASTER, &[3, i as u64, 0]));
        let mut rng = rng_from_seed(derive_seed(MASTER, &[3, i as u64, 1]));
        let norms: Vec<f64> = (0..maps)
            .map(|_| {
                split_map_from_samples(&mut oracle, n, k, &mut rng)
                    .unwrap()
                    .split_norm_sq(q.probs())
            })
            .collect();
        let (mean, sd) = mean_sd(&norms);
        let bound = 1.0 / k + 5.0 * sd / (maps as f64).sqrt();
        pass &= mean <= bound;
        parts.push(format!("(n={n},k={k}) mean {mean:.5} vs bound {bound:.5}"));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn cell(n: usize, m: usize, k: usize, eps: f64) -> GridCell {
    GridCell { n, m, k, eps }
}

fn battery() -> Vec<(&'static str, &'static str, GridCell)> {
    vec![
        ("identity_known", "paninski", cell(100, 1, 1, 0.5)),
        (
            "identity_instance_optimal",
            "point_tail",
            cell(10_000, 1, 1, 0.25),
        ),
        (
            "identity_instance_optimal",
            "paninski",
            cell(1000, 1, 1, 0.5),
        ),
        ("closeness_equal", "paninski", cell(200, 1, 1, 0.5)),
        ("closeness_unequal", "paninski", cell(200, 1, 1, 0.5)),
        ("closeness_unequal", "paninski", cell(200, 10, 1, 0.5)),
        ("closeness_unequal", "paninski", cell(200, 100, 1, 0.5)),
        ("closeness_adaptive", "paninski", cell(1000, 1, 1, 0.5)),
        ("closeness_adaptive", "two_level", cell(1000, 1, 1, 0.25)),
        ("hellinger_closeness", "hellinger", cell(10_000, 1, 10, 0.3)),
        ("independence_2d", "product_2d", cell(20, 10, 1, 0.5)),
        ("independence_2d", "heavy_light_2d", cell(64, 8, 8, 0.5)),
        ("independence_dd", "product_3d", cell(4, 1, 1, 0.5)),
        (
            "collection_sampling",
            "collection_marginal",
            cell(20, 10, 1, 0.5),
        ),
        (
            "collection_query",
            "collection_mixture",
            cell(100, 8, 1, 0.4),
        ),
        ("k_histogram", "histogram", cell(512, 1, 8, 0.5)),
    ]
}

fn run_battery(params: &Params, trials: usize, seed: u64) -> Vec<PowerCell> {
    battery()
        .iter()
        .enumerate()
        .map(|(i, (t, f, c))| evaluate_cell(t, f, c, i, params, 1.0, trials, seed).unwrap())
        .collect()
}

fn c4_battery(params: &Params) -> Outcome {
    let cells = run_battery(params, BATTERY_TRIALS, derive_seed(MASTER, &[4]));
    save_csv("battery.csv", &cells);
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    for c in &cells {
        lines.push(format!(
            "    {} / {} n={} m={} k={}: yes {:.3} no {:.3} samples {:.0}",
            c.tester, c.family, c.n, c.m, c.k, c.yes_accept_rate, c.no_reject_rate, c.mean_samples
        ));
        if c.min_side() < RATE_FLOOR {
            bad.push(format!("{}/{}", c.tester, c.family));
        }
    }
    let head = if bad.is_empty() {
        format!(
            "{} cells x {BATTERY_TRIALS} trials per side, all rates >= {RATE_FLOOR}",
            cells.len()
        )
    } else {
        format!("below {RATE_FLOOR}: {}", bad.join(", "))
    };
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{head}\n{}", lines.join("\n")),
    }
}

fn c5_chi2(params: &Params) -> Outcome {
    let c = evaluate_cell(
        "identity_known",
        "chi2_tilt",
        &cell(100, 1, 1, 0.5),
        0,
        params,
        1.0,
        BATTERY_TRIALS,
        derive_seed(MASTER, &[5]),
    )
    .unwrap();
    Outcome {
        pass: c.yes_accept_rate >= RATE_FLOOR,
        detail: format!(
            "YES rate {:.3} at chi^2 = eps^2/20 (n=100, eps=0.5)",
            c.yes_accept_rate
        ),
    }
}

fn c6_exponents(params: &Params) -> Outcome {
    let trials = 150;
    let ns = [250, 500, 1000, 2000, 4000];
    // Near-uniform pairs only need sqrt(n)/eps^2 for closeness; the heavy half
    // of two_level is what makes the n^{2/3} term bind. Its light half caps
    // the reachable l1 distance below 0.5.
    let closeness = fit_complexity_exponent(
        "closeness_equal",
        "two_level",
        &ns,
        cell(0, 1, 1, 0.4),
        params,
        FIT_TARGET_ACCURACY,
        trials,
        derive_seed(MASTER, &[6, 0]),
    );
    let identity = fit_complexity_exponent(
        "identity_known",
        "paninski",
        &ns,
        cell(0, 1, 1, 0.5),
        params,
        FIT_TARGET_ACCURACY,
        trials,
        derive_seed(MASTER, &[6, 1]),
    );
    // m = sqrt(n): the combined exponent of n^{2/3} m^{1/3} is 5/6.
    let mut indep_pts = Vec::new();
    let mut indep_err = None;
    for (i, &n) in [64usize, 256, 1024, 4096].iter().enumerate() {
        let m = (n as f64).sqrt() as usize;
        match min_budget_multiplier(
            "independence_2d",
            "product_2d",
            &cell(n, m, 1, 0.5),
            params,
            FIT_TARGET_ACCURACY,
            (1.0 / 64.0, 64.0),
            trials,
            derive_seed(MASTER, &[6, 2, i as u64]),
        ) {
            Ok(s) if s.multiplier.is_some() => {
                indep_pts.push((n as f64, s.cell.unwrap().mean_samples))
            }
            Ok(_) => indep_err = Some(format!("no budget reaches target at n={n}")),
            Err(e) => indep_err = Some(e.to_string()),
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    match closeness {
        Ok(f) => {
            pass &= (0.55..=0.80).contains(&f.exponent);
            parts.push(format!(
                "closeness_equal on two_level {:.3} (residual {:.3}, want [0.55, 0.80])",
                f.exponent, f.residual
            ));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("closeness_equal fit failed: {e}"));
        }
    }
    match identity {
        Ok(f) => {
            pass &= (0.40..=0.62).contains(&f.exponent);
            parts.push(format!(
                "identity_known {:.3} (residual {:.3}, want [0.40, 0.62])",
                f.exponent, f.residual
            ));
        }
        Err(e) => {
            pass = false;
            parts.push(format!("identity_known fit failed: {e}"));
        }
    }
    match indep_err {
        None => {
            let (s, _, r) = disttest::harness::fit_log_log(&indep_pts).unwrap();
            pass &= (s - 5.0 / 6.0).abs() <= 0.15;
            parts.push(format!(
                "independence_2d (m = sqrt n) {s:.3} (residual {r:.3}, want 5/6 +- 0.15)"
            ));
        }
        Some(e) => {
            pass = false;
            parts.push(format!("independence_2d search failed: {e}"));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn c7_adaptive(params: &Params) -> Outcome {
    let c = cell(10_000, 1, 1, 0.25);
    let trials = 200;
    let seed = derive_seed(MASTER, &[7]);
    let a = evaluate_cell(
        "closeness_adaptive",
        "two_level",
        &c,
        0,
        params,
        1.0,
        trials,
        seed,
    )
    .unwrap();
    let e = evaluate_cell(
        "closeness_equal",
        "two_level",
        &c,
        0,
        params,
        1.0,
        trials,
        seed,
    )
    .unwrap();
    let ratio = e.mean_samples / a.mean_samples;
    let pass = ratio >= 1.5 && a.min_side() >= RATE_FLOOR && e.min_side() >= RATE_FLOOR;
    Outcome {
        pass,
        detail: format!(
            "equal/adaptive budget ratio {ratio:.3} (want >= 1.5); adaptive {:.0} samples, yes {:.3} no {:.3}; equal {:.0} samples, yes {:.3} no {:.3}",
            a.mean_samples, a.yes_accept_rate, a.no_reject_rate, e.mean_samples, e.yes_accept_rate, e.no_reject_rate
        ),
    }
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min)
}

fn c8_mi_per_bin() -> Outcome {
    let (n, m) = (100.0, 10.0);
    let mut ratios = Vec::new();
    for lam in [0.01, 0.1, 0.5] {
        for eps in [0.05f64, 0.1, 0.2] {
            let est = mi_per_bin(lam * n * m, n, m, eps, 1_000_000).unwrap();
            ratios.push(est.value / (lam * lam * eps.powi(4)));
        }
    }
    let zero = mi_per_bin(100.0, 100.0, 10.0, 0.0, 1_000_000)
        .unwrap()
        .value;
    let s = spread(&ratios);
    Outcome {
        pass: s < 3.0 && zero == 0.0,
        detail: format!("ratio spread {s:.3} (limit 3), eps=0 gives {zero}"),
    }
}

fn c9_mi_row() -> Outcome {
    let (n, m) = (64.0, 2usize);
    let mut ratios = Vec::new();
    let mut worst_trunc: f64 = 0.0;
    for k in [8.0, 16.0, 32.0] {
        for eps in [0.1f64, 0.2] {
            let est = mi_heavy_light_row(k, n, m, eps, 24).unwrap();
            worst_trunc = worst_trunc.max(est.truncation_error_bound / est.value);
            ratios.push(est.value / (k.powi(3) * eps.powi(4) / (n.powi(3) * m as f64)));
        }
    }
    let s = spread(&ratios);
    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    Outcome {
        pass: s < 5.0,
        detail: format!("ratio spread {s:.3} (limit 5); ratios by (k, eps) [{}]; truncation <= {worst_trunc:.1e} of value", list.join(", ")),
    }
}

fn c10_indistinguishable(params: &Params) -> Outcome {
    let c = cell(64, 64, 1, 0.5);
    let search = min_budget_multiplier(
        "independence_2d",
        "product_2d",
        &c,
        params,
        CALIBRATION_TARGET,
        (1.0 / 64.0, 64.0),
        200,
        derive_seed(MASTER, &[10, 0]),
    )
    .unwrap();
    let Some(full) = search.multiplier else {
        return Outcome {
            pass: false,
            detail: "no budget up to 64x reaches the calibration target".into(),
        };
    };
    let seed = derive_seed(MASTER, &[10, 1]);
    let at = |mult| {
        evaluate_cell(
            "independence_2d",
            "product_2d",
            &c,
            0,
            params,
            mult,
            BATTERY_TRIALS,
            seed,
        )
        .unwrap()
    };
    let (f, h) = (at(full), at(full / 2.0));
    Outcome {
        pass: f.accuracy >= RATE_FLOOR && h.accuracy < RATE_FLOOR,
        detail: format!(
            "calibrated multiplier {full:.3}: accuracy {:.3} ({:.0} samples); half: accuracy {:.3} ({:.0} samples)",
            f.accuracy, f.mean_samples, h.accuracy, h.mean_samples
        ),
    }
}

fn csv_bytes(cells: &[PowerCell]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, cells).unwrap();
    buf
}

fn save_csv(name: &str, cells: &[PowerCell]) {
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::write(path, csv_bytes(cells));
}

fn c11_determinism(params: &Params) -> Outcome {
    let seed = derive_seed(MASTER, &[11]);
    let a = csv_bytes(&run_battery(params, 20, seed));
    let b = csv_bytes(&run_battery(params, 20, seed));
    Outcome {
        pass: a == b,
        detail: format!(
            "two battery runs at 20 trials: {} CSV bytes, identical = {}",
            a.len(),
            a == b
        ),
    }
}

fn main() {
    let params = Params::default();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("l2 statistic unbiasedness", Box::new(c1_unbiased)),
        ("split exactness", Box::new(c2_split_exact)),
        ("split norm bound", Box::new(c3_split_norm)),
        (
            "tester correctness battery",
            Box::new(|| c4_battery(&params)),
        ),
        (
            "chi^2 completeness of identity_known",
            Box::new(|| c5_chi2(&params)),
        ),
        ("scaling exponents", Box::new(|| c6_exponents(&params))),
        ("instance-adaptivity", Box::new(|| c7_adaptive(&params))),
        ("MI per-bin scaling", Box::new(c8_mi_per_bin)),
        ("MI heavy/light row scaling", Box::new(c9_mi_row)),
        (
            "indistinguishability at half budget",
            Box::new(|| c10_indistinguishable(&params)),
        ),
        ("determinism", Box::new(|| c11_determinism(&params))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {:2} {} {name}: {} [{:.1}s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
