//! Experiment harness: power sweeps with Wilson intervals, budget search,
//! complexity-exponent fits and constant calibration.

mod families;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::testers::{Answer, Params, TestVerdict};

pub use families::{
    chi2_tilt, generate, point_tail, run_trial, test_eps, two_level, Instance, FAMILIES, TESTERS,
};

/// One point of a parameter grid. `m` and `k` are ignored by testers that
/// do not use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "one")]
    pub k: usize,
    pub eps: f64,
}

fn one() -> usize {
    1
}

fn unit() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub tester: String,
    pub family: String,
    pub cells: Vec<GridCell>,
    /// Trials per label per cell.
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "unit")]
    pub budget_multipliers: Vec<f64>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !TESTERS.contains(&self.tester.as_str()) {
            return invalid(format!("unknown tester '{}'", self.tester));
        }
        if !FAMILIES.contains(&self.family.as_str()) {
            return invalid(format!("unknown family '{}'", self.family));
        }
        if self.cells.is_empty() || self.trials == 0 || self.budget_multipliers.is_empty() {
            return invalid("spec needs at least one cell, one trial and one budget multiplier");
        }
        if self
            .budget_multipliers
            .iter()
            .any(|b| !(b.is_finite() && *b > 0.0))
        {
            return invalid("budget multipliers must be positive");
        }
        Ok(())
    }
}

/// Results for one (cell, budget) point, both labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub tester: String,
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eps: f64,
    pub budget_multiplier: f64,
    pub trials: usize,
    pub yes_accept_rate: f64,
    pub yes_ci_lo: f64,
    pub yes_ci_hi: f64,
    pub no_reject_rate: f64,
    pub no_ci_lo: f64,
    pub no_ci_hi: f64,
    pub accuracy: f64,
    pub mean_samples: f64,
    pub median_samples: f64,
}

impl PowerCell {
    pub fn min_side(&self) -> f64 {
        self.yes_accept_rate.min(self.no_reject_rate)
    }
}

pub const WILSON_Z: f64 = 1.959963984540054;

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Seed of one trial: independent per cell, label and trial index.
pub fn trial_seed(master: u64, cell: usize, label: Answer, trial: usize) -> u64 {
    derive_seed(master, &[cell as u64, label.is_yes() as u64, trial as u64])
}

fn run_trials(
    tester: &str,
    family: &str,
    cell: &GridCell,
    label: Answer,
    params: &Params,
    seeds: Vec<u64>,
) -> Result<Vec<TestVerdict>> {
    let one = |s: u64| run_trial(tester, family, cell, label, params, s);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.into_iter().map(one).collect()
    }
}

fn median(v: &mut [u64]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Runs `trials` YES and `trials` NO trials on one cell. Results depend only
/// on the seeds, not on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_cell(
    tester: &str,
    family: &str,
    cell: &GridCell,
    cell_index: usize,
    params: &Params,
    budget_multiplier: f64,
    trials: usize,
    seed: u64,
) -> Result<PowerCell> {
    let params = params.with_budget_multiplier(budget_multiplier);
    let seeds = |label| {
        (0..trials)
            .map(|t| trial_seed(seed, cell_index, label, t))
            .collect()
    };
    let yes = run_trials(
        tester,
        family,
        cell,
        Answer::Yes,
        &params,
        seeds(Answer::Yes),
    )?;
    let no = run_trials(tester, family, cell, Answer::No, &params, seeds(Answer::No))?;
    let acc_yes = yes.iter().filter(|v| v.answer.is_yes()).count();
    let rej_no = no.iter().filter(|v| !v.answer.is_yes()).count();
    let mut samples: Vec<u64> = yes.iter().chain(&no).map(|v| v.total_samples()).collect();
    let mean_samples = samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64;
    let (yes_ci_lo, yes_ci_hi) = wilson_interval(acc_yes, trials);
    let (no_ci_lo, no_ci_hi) = wilson_interval(rej_no, trials);
    let yes_accept_rate = acc_yes as f64 / trials as f64;
    let no_reject_rate = rej_no as f64 / trials as f64;
    Ok(PowerCell {
        tester: tester.to_string(),
        family: family.to_string(),
        n: cell.n,
        m: cell.m,
        k: cell.k,
        eps: cell.eps,
        budget_multiplier,
        trials,
        yes_accept_rate,
        yes_ci_lo,
        yes_ci_hi,
        no_reject_rate,
        no_ci_lo,
        no_ci_hi,
        accuracy: (yes_accept_rate + no_reject_rate) / 2.0,
        mean_samples,
        median_samples: median(&mut samples),
    })
}

/// Every cell at every budget multiplier, in spec order.
pub fn run_power_sweep(spec: &ExperimentSpec, params: &Params) -> Result<Vec<PowerCell>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.cells.len() * spec.budget_multipliers.len());
    for (i, cell) in spec.cells.iter().enumerate() {
        for &b in &spec.budget_multipliers {
            out.push(evaluate_cell(
                &spec.tester,
                &spec.family,
                cell,
                i,
                params,
                b,
                spec.trials,
                spec.seed,
            )?);
        }
    }
    Ok(out)
}

/// Budget search works on a log2 grid of this resolution.
pub const BUDGET_STEP_LOG2: f64 = 0.25;
pub const BUDGET_SEARCH_ITERS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSearch {
    /// Smallest multiplier found to reach the target, `None` if even the top
    /// of the range misses it.
    pub multiplier: Option<f64>,
    pub cell: Option<PowerCell>,
    pub evaluations: usize,
}

/// Searches the `2^(1/4)` grid inside `[lo, hi]`: starting from 1, steps
/// by factors of 2 until the target is bracketed, then bisects. Every
/// evaluation reuses the same trial seeds, so the accuracy curve is a fixed
/// function of the multiplier. At most `BUDGET_SEARCH_ITERS` evaluations.
#[allow(clippy::too_many_arguments)]
pub fn min_budget_multiplier(
    tester: &str,
    family: &str,
    cell: &GridCell,
    params: &Params,
    target: f64,
    (lo, hi): (f64, f64),
    trials: usize,
    seed: u64,
) -> Result<BudgetSearch> {
    if !(lo > 0.0 && hi >= lo) {
        return invalid("budget range must satisfy 0 < lo <= hi");
    }
    let snap = |x: f64| (x / BUDGET_STEP_LOG2).round() as i64;
    let (min_s, max_s) = (snap(lo.log2()), snap(hi.log2()));
    let mult = |s: i64| (s as f64 * BUDGET_STEP_LOG2).exp2();
    let octave = snap(1.0);
    let evaluations = std::cell::Cell::new(0usize);
    let eval = |s: i64| {
        evaluations.set(evaluations.get() + 1);
        evaluate_cell(tester, family, cell, 0, params, mult(s), trials, seed)
    };
    let start = 0i64.clamp(min_s, max_s);
    let first = eval(start)?;
    // `pass` reaches the target; `fail` (if any) does not.
    let (mut pass, mut best, mut fail);
    if first.accuracy >= target {
        (pass, best, fail) = (start, first, None);
        while pass > min_s {
            let s = (pass - octave).max(min_s);
            let c = eval(s)?;
            if c.accuracy >= target {
                (pass, best) = (s, c);
            } else {
                fail = Some(s);
                break;
            }
        }
    } else {
        let mut below = start;
        let mut last = first;
        loop {
            if below >= max_s {
                return Ok(BudgetSearch {
                    multiplier: None,
                    cell: Some(last),
                    evaluations: evaluations.get(),
                });
            }
            let s = (below + octave).min(max_s);
            let c = eval(s)?;
            if c.accuracy >= target {
                (pass, best, fail) = (s, c, Some(below));
                break;
            }
            (below, last) = (s, c);
        }
    }
    if let Some(mut f) = fail {
        while pass - f > 1 && evaluations.get() < BUDGET_SEARCH_ITERS {
            let mid = f + (pass - f) / 2;
            let c = eval(mid)?;
            if c.accuracy >= target {
                (pass, best) = (mid, c);
            } else {
                f = mid;
            }
        }
    }
    Ok(BudgetSearch {
        multiplier: Some(mult(pass)),
        cell: Some(best),
        evaluations: evaluations.get(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// `(n, mean samples at the minimal budget)` per grid point.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return invalid("log-log fit needs two or more positive points");
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("log-log fit needs distinct x values");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok((slope, intercept, (rss / k).sqrt()))
}

pub const FIT_TARGET_ACCURACY: f64 = 0.75;

/// For each `n`, finds the minimal budget reaching `target` accuracy and
/// fits `samples ~ n^exponent`.
#[allow(clippy::too_many_arguments)]
pub fn fit_complexity_exponent(
    tester: &str,
    family: &str,
    ns: &[usize],
    template: GridCell,
    params: &Params,
    target: f64,
    trials: usize,
    seed: u64,
) -> Result<ExponentFit> {
    let mut points = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let cell = GridCell { n, ..template };
        let s = min_budget_multiplier(
            tester,
            family,
            &cell,
            params,
            target,
            (1.0 / 64.0, 64.0),
            trials,
            derive_seed(seed, &[i as u64]),
        )?;
        match s.cell {
            Some(c) if s.multiplier.is_some() => points.push((n, c.mean_samples)),
            _ => {
                return invalid(format!(
                    "no budget up to 64x reaches accuracy {target} at n={n}"
                ))
            }
        }
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, s)| (n as f64, s)).collect();
    let (exponent, intercept, residual) = fit_log_log(&xy)?;
    Ok(ExponentFit {
        exponent,
        intercept,
        residual,
        points,
    })
}

/// Calibration grid: powers of sqrt(2) from 1 to 64.
pub fn calibration_grid() -> Vec<f64> {
    (0..=12).map(|i| (i as f64 / 2.0).exp2()).collect()
}

pub const CALIBRATION_TARGET: f64 = 0.67;

/// Single-stage testers whose error is set directly by the l2 sample
/// constant; calibrating on them fixes `c_sample` for every tester.
pub fn canonical_cases() -> Vec<(&'static str, &'static str, GridCell)> {
    vec![
        (
            "identity_known",
            "paninski",
            GridCell {
                n: 100,
                m: 1,
                k: 1,
                eps: 0.5,
            },
        ),
        (
            "identity_known",
            "two_level",
            GridCell {
                n: 1000,
                m: 1,
                k: 1,
                eps: 0.25,
            },
        ),
        (
            "closeness_equal",
            "paninski",
            GridCell {
                n: 200,
                m: 1,
                k: 1,
                eps: 0.5,
            },
        ),
        (
            "k_histogram",
            "histogram",
            GridCell {
                n: 512,
                m: 1,
                k: 8,
                eps: 0.5,
            },
        ),
        (
            "independence_2d",
            "product_2d",
            GridCell {
                n: 20,
                m: 10,
                k: 1,
                eps: 0.5,
            },
        ),
        (
            "collection_sampling",
            "collection_marginal",
            GridCell {
                n: 20,
                m: 10,
                k: 1,
                eps: 0.5,
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Chosen multiplier of `unit.l2.c_sample`, `None` if the grid tops out.
    pub multiplier: Option<f64>,
    /// Worst single-side error over the canonical cells at that multiplier.
    pub worst_error: Option<f64>,
    pub params: Params,
    pub cells: Vec<PowerCell>,
}

/// Smallest grid multiplier of `unit.l2.c_sample` for which every
/// `(tester, family, cell)` reaches `CALIBRATION_TARGET` on both sides.
/// The returned params differ from `unit` only in the sample constant, so
/// they reproduce exactly the runs the search measured.
pub fn calibrate_constants(
    cases: &[(&str, &str, GridCell)],
    unit: &Params,
    trials: usize,
    seed: u64,
) -> Result<Calibration> {
    if cases.is_empty() || trials == 0 {
        return invalid("calibration needs cases and trials");
    }
    let mut last = Vec::new();
    for mult in calibration_grid() {
        let mut cells = Vec::with_capacity(cases.len());
        let mut ok = true;
        for (i, (tester, family, cell)) in cases.iter().enumerate() {
            let c = evaluate_cell(tester, family, cell, i, unit, mult, trials, seed)?;
            ok &= c.min_side() >= CALIBRATION_TARGET;
            cells.push(c);
            if !ok {
                break;
            }
        }
        if ok {
            let worst = cells.iter().map(|c| 1.0 - c.min_side()).fold(0.0, f64::max);
            let params = unit.with_budget_multiplier(mult);
            return Ok(Calibration {
                multiplier: Some(mult),
                worst_error: Some(worst),
                params,
                cells,
            });
        }
        last = cells;
    }
    Ok(Calibration {
        multiplier: None,
        worst_error: None,
        params: unit.clone(),
        cells: last,
    })
}

/// Hex SHA-256 of the serialized constants.
pub fn constants_hash(params: &Params) -> String {
    let digest = Sha256::digest(params.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub code_version: String,
    pub constants_sha256: String,
    pub params: Params,
    pub rows: usize,
}

pub fn manifest(spec: &ExperimentSpec, params: &Params, rows: usize) -> Manifest {
    Manifest {
        spec: spec.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        constants_sha256: constants_hash(params),
        params: params.clone(),
        rows,
    }
}

/// CSV columns are the `PowerCell` fields in declaration order.
pub fn write_csv<W: Write>(w: W, cells: &[PowerCell]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for c in cells {
        wr.serialize(c)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.manifest.json`.
pub fn write_sweep(
    stem: &Path,
    spec: &ExperimentSpec,
    params: &Params,
    cells: &[PowerCell],
) -> Result<()> {
    write_csv(std::fs::File::create(stem.with_extension("csv"))?, cells)?;
    let m = manifest(spec, params, cells.len());
    std::fs::write(
        stem.with_extension("manifest.json"),
        serde_json::to_string_pretty(&m)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-3);
    }

    #[test]
    fn log_log_recovers_power() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x.powf(0.5)))
            .collect();
        let (s, i, r) = fit_log_log(&pts).unwrap();
        assert!((s - 0.5).abs() < 1e-12 && (i - 3f64.ln()).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn grid_spans_one_to_64() {
        let g = calibration_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 1.0);
        assert!((g[12] - 64.0).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let mut s = ExperimentSpec {
            tester: "coin".into(),
            family: "paninski".into(),
            cells: vec![GridCell {
                n: 10,
                m: 1,
                k: 1,
                eps: 0.5,
            }],
            trials: 4,
            seed: 1,
            budget_multipliers: vec![1.0],
        };
        assert!(s.validate().is_ok());
        s.tester = "x".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_csv_has_header() {
        let spec = ExperimentSpec {
            tester: "identity_known".into(),
            family: "paninski".into(),
            cells: vec![GridCell {
                n: 50,
                m: 1,
                k: 1,
                eps: 0.5,
            }],
            trials: 6,
            seed: 3,
            budget_multipliers: vec![1.0],
        };
        let p = Params::default();
        let a = run_power_sweep(&spec, &p).unwrap();
        let b = run_power_sweep(&spec, &p).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("tester,family,n,m,k,eps,budget_multiplier,trials,yes_accept_rate")
        );
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn budget_search_finds_threshold_of_synthetic_tester() {
        // constant_budget errs w.p. exp(-c/20)/2 with c = 2 * mult: accuracy
        // 0.75 needs mult >= 10 ln 2 = 6.93, so the grid answer is 2^(11/4).
        let p = Params::default();
        let c = GridCell {
            n: 10,
            m: 1,
            k: 1,
            eps: 0.5,
        };
        let s = min_budget_multiplier(
            "constant_budget",
            "paninski",
            &c,
            &p,
            0.75,
            (1.0 / 64.0, 64.0),
            4000,
            1,
        )
        .unwrap();
        assert!(
            (s.multiplier.unwrap().log2() - 2.75).abs() <= 0.25 + 1e-9,
            "{:?}",
            s.multiplier
        );
        assert!(s.evaluations <= BUDGET_SEARCH_ITERS);
        let none =
            min_budget_multiplier("coin", "paninski", &c, &p, 0.9, (1.0, 4.0), 50, 1).unwrap();
        assert!(none.multiplier.is_none());
    }

    #[test]
    fn hash_changes_with_constants() {
        let p = Params::default();
        assert_eq!(constants_hash(&p).len(), 64);
        assert_ne!(
            constants_hash(&p),
            constants_hash(&p.with_budget_multiplier(2.0))
        );
    }
}
