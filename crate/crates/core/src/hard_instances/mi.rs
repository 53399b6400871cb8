use serde::Serialize;

use crate::dist_core::ln_factorial;
use crate::error::{invalid, Result};

/// Mutual information a 51%-accurate distinguisher needs, in nats.
pub const MI_DISTINGUISH_THRESHOLD: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiMethod {
    ExactSeries,
    ExactEnumeration,
}

/// `I(X : counts)` for a uniform bit X, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MIEstimate {
    pub value: f64,
    pub method: MiMethod,
    pub truncation_error_bound: f64,
}

impl MIEstimate {
    pub fn below_threshold(&self) -> bool {
        self.value + self.truncation_error_bound < MI_DISTINGUISH_THRESHOLD
    }
}

/// `((1+r) ln(1+r) + (1-r) ln(1-r)) / 2`, the per-point Jensen-Shannon
/// contribution with mixture weight factored out.
fn js_f(r: f64) -> f64 {
    let r2 = r * r;
    if r.abs() < 0.01 {
        // sum_j r^{2j} / (2j (2j - 1))
        r2 * (0.5 + r2 * (1.0 / 12.0 + r2 * (1.0 / 30.0 + r2 * (1.0 / 56.0 + r2 / 90.0))))
    } else {
        0.5 * ((1.0 + r) * r.ln_1p() + (1.0 - r) * (-r).ln_1p())
    }
}

fn ln_poisson(mu: f64, l: u64) -> f64 {
    if mu == 0.0 {
        return if l == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mu + l as f64 * mu.ln() - ln_factorial(l)
}

/// `P1(l)/P0(l) - 1` where P0 is `Poi(lam)` and P1 the even mixture of
/// `Poi(lam (1 +- eps))`, computed without cancellation. Even in eps.
fn mixture_excess(lam: f64, eps: f64, l: u64) -> f64 {
    let lf = l as f64;
    let s = 0.5 * lf * (-eps * eps).ln_1p();
    let d = lf * eps.atanh() - lam * eps;
    let h = (0.5 * d).sinh();
    s.exp_m1() * d.cosh() + 2.0 * h * h
}

/// Tail `P(Poi(mu) > l)` bounded by a geometric majorant once `l + 1 > mu`.
fn poisson_tail_bound(mu: f64, l: u64) -> f64 {
    let ratio = mu / (l as f64 + 2.0);
    if ratio >= 1.0 {
        return 1.0;
    }
    (ln_poisson(mu, l + 1)).exp() / (1.0 - ratio)
}

/// `I(X : a)` for one cell: `a ~ Poi(lam)` given X = 0 and `Poi(lam (1 +- eps))`
/// with a fair sign given X = 1, `lam = k/(nm)`. Summed until both laws are
/// below `1e-18` and `l > 10 lam + 50`.
pub fn mi_per_bin(k: f64, n: f64, m: f64, eps: f64, max_terms: u64) -> Result<MIEstimate> {
    if !(k > 0.0 && n > 0.0 && m > 0.0) {
        return invalid("k, n, m must be positive");
    }
    if eps.is_nan() || eps.abs() >= 1.0 {
        return invalid("|eps| must be below 1");
    }
    // The X = 1 law is even in eps.
    let eps = eps.abs();
    let lam = k / (n * m);
    let mut value = 0.0;
    let mut l = 0u64;
    loop {
        let p0 = ln_poisson(lam, l).exp();
        let g = mixture_excess(lam, eps, l);
        let p1 = p0 * (1.0 + g);
        let r = g / (2.0 + g);
        value += 0.5 * (p0 + p1) * js_f(r);
        if p0.max(p1) < 1e-18 && l as f64 > 10.0 * lam + 50.0 {
            break;
        }
        l += 1;
        if l >= max_terms {
            return invalid(format!("series did not converge within {max_terms} terms"));
        }
    }
    let mu = lam * (1.0 + eps.abs());
    let tail = std::f64::consts::LN_2 * (poisson_tail_bound(lam, l) + poisson_tail_bound(mu, l));
    Ok(MIEstimate {
        value,
        method: MiMethod::ExactSeries,
        truncation_error_bound: tail,
    })
}

/// Exact `I(X : A)` by enumerating count vectors in `{0..cap}^m` for one row
/// whose cells are independent given X and the row type. The row is heavy
/// with probability `heavy_prob`, then every cell is `Poi(heavy_mean)`;
/// otherwise cells are `Poi(lam)` (X = 0) or the `+-eps` mixture (X = 1).
fn row_mi(
    heavy_prob: f64,
    heavy_mean: f64,
    lam: f64,
    eps: f64,
    m: usize,
    cap: u64,
) -> Result<MIEstimate> {
    let states = (cap + 1).checked_pow(m as u32).filter(|&s| s <= 4_000_000);
    let Some(states) = states else {
        return invalid(format!(
            "enumeration of {}^{m} count vectors is too large",
            cap + 1
        ));
    };
    let eps = eps.abs();
    let ln_p0: Vec<f64> = (0..=cap).map(|l| ln_poisson(lam, l)).collect();
    let ln_heavy: Vec<f64> = (0..=cap).map(|l| ln_poisson(heavy_mean, l)).collect();
    let ln1p_g: Vec<f64> = (0..=cap)
        .map(|l| mixture_excess(lam, eps, l).ln_1p())
        .collect();
    let mut v = vec![0u64; m];
    let mut value = 0.0;
    for _ in 0..states {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &x in &v {
            a += ln_p0[x as usize];
            b += ln_heavy[x as usize];
            c += ln1p_g[x as usize];
        }
        let light0 = (1.0 - heavy_prob) * a.exp();
        let heavy = heavy_prob * b.exp();
        let p0 = heavy + light0;
        let diff = light0 * c.exp_m1();
        let p1 = p0 + diff;
        if p0 + p1 > 0.0 {
            value += 0.5 * (p0 + p1) * js_f(diff / (p0 + p1));
        }
        for slot in v.iter_mut() {
            *slot += 1;
            if *slot <= cap {
                break;
            }
            *slot = 0;
        }
    }
    let mu = heavy_mean.max(lam * (1.0 + eps.abs()));
    let tail = std::f64::consts::LN_2 * 2.0 * m as f64 * poisson_tail_bound(mu, cap);
    Ok(MIEstimate {
        value,
        method: MiMethod::ExactEnumeration,
        truncation_error_bound: tail,
    })
}

/// `I(X : A)` for one row `A = (a_1..a_m)` of the heavy/light family under a
/// `Poi(k)` sample: heavy rows (probability `k/n`) have cells `Poi(1/m)`,
/// light cells are `Poi(k/(nm))` or the `+-eps` mixture.
pub fn mi_heavy_light_row(
    k: f64,
    n: f64,
    m: usize,
    eps: f64,
    count_cap: u64,
) -> Result<MIEstimate> {
    if !(k > 0.0 && n > 0.0 && 2.0 * k <= n) {
        return invalid("heavy/light row needs 0 < k <= n/2");
    }
    if m == 0 || m > 4 {
        return invalid("row enumeration supports 1 <= m <= 4");
    }
    if eps.is_nan() || eps.abs() >= 1.0 {
        return invalid("|eps| must be below 1");
    }
    row_mi(k / n, 1.0 / m as f64, k / (n * m as f64), eps, m, count_cap)
}

/// Joint `I(X : (a_1..a_bins))` for `bins` cells of the uniform `+-eps`
/// family, each cell independent given X.
pub fn mi_joint_bins(
    k: f64,
    n: f64,
    m: f64,
    eps: f64,
    bins: usize,
    count_cap: u64,
) -> Result<MIEstimate> {
    if !(k > 0.0 && n > 0.0 && m > 0.0) {
        return invalid("k, n, m must be positive");
    }
    if bins == 0 || bins > 4 {
        return invalid("joint enumeration supports 1 to 4 cells");
    }
    row_mi(0.0, 0.0, k / (n * m), eps, bins, count_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_js(p0: &[f64], p1: &[f64]) -> f64 {
        p0.iter()
            .zip(p1)
            .map(|(&a, &b)| {
                let mid = 0.5 * (a + b);
                let t = |x: f64| {
                    if x > 0.0 {
                        0.5 * x * (x / mid).ln()
                    } else {
                        0.0
                    }
                };
                t(a) + t(b)
            })
            .sum()
    }

    fn pmf(mu: f64, l: u64) -> f64 {
        (-mu + l as f64 * mu.ln() - (1..=l).map(|i| (i as f64).ln()).sum::<f64>()).exp()
    }

    #[test]
    fn js_series_matches_direct_at_switch() {
        for r in [0.0099f64, 0.01, 0.0101, 0.5, -0.3] {
            let direct = 0.5 * ((1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln());
            assert!((js_f(r) - direct).abs() <= 1e-10 * direct.abs(), "r={r}");
        }
    }

    #[test]
    fn zero_eps_is_zero() {
        assert_eq!(
            mi_per_bin(100.0, 100.0, 10.0, 0.0, 10_000).unwrap().value,
            0.0
        );
        assert_eq!(
            mi_heavy_light_row(8.0, 64.0, 2, 0.0, 24).unwrap().value,
            0.0
        );
    }

    #[test]
    fn even_in_eps() {
        let a = mi_per_bin(50.0, 10.0, 10.0, 0.2, 10_000).unwrap().value;
        let b = mi_per_bin(50.0, 10.0, 10.0, -0.2, 10_000).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn per_bin_matches_direct_mixture() {
        let (lam, eps) = (0.5f64, 0.3f64);
        let p0: Vec<f64> = (0..80).map(|l| pmf(lam, l)).collect();
        let p1: Vec<f64> = (0..80)
            .map(|l| 0.5 * (pmf(lam * (1.0 + eps), l) + pmf(lam * (1.0 - eps), l)))
            .collect();
        let ours = mi_per_bin(lam, 1.0, 1.0, eps, 10_000).unwrap();
        assert!((ours.value - direct_js(&p0, &p1)).abs() < 1e-12);
        assert!(ours.truncation_error_bound < 1e-15);
    }

    #[test]
    fn per_bin_monotone_in_eps() {
        for lam in [0.01, 0.3, 2.0] {
            let mut last = 0.0;
            for i in 0..=50 {
                let v = mi_per_bin(lam, 1.0, 1.0, i as f64 * 0.01, 10_000)
                    .unwrap()
                    .value;
                assert!(v >= last, "lam={lam} i={i}");
                last = v;
            }
        }
    }

    #[test]
    fn joint_one_bin_matches_series() {
        let a = mi_joint_bins(5.0, 10.0, 1.0, 0.3, 1, 40).unwrap().value;
        let b = mi_per_bin(5.0, 10.0, 1.0, 0.3, 10_000).unwrap().value;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn enumeration_guards() {
        assert!(mi_heavy_light_row(8.0, 64.0, 5, 0.1, 8).is_err());
        assert!(mi_heavy_light_row(40.0, 64.0, 2, 0.1, 8).is_err());
        assert!(mi_joint_bins(1.0, 1.0, 1.0, 0.1, 4, 100).is_err());
    }
}
