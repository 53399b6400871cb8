//! Lower-bound constructions with exact farness certificates, and an exact
//! mutual-information oracle for the Poissonized sample counts they induce.

mod mi;

pub use mi::{
    mi_heavy_light_row, mi_joint_bins, mi_per_bin, MIEstimate, MiMethod, MI_DISTINGUISH_THRESHOLD,
};

use rand::Rng;
use serde::Serialize;

use crate::dist_core::{hellinger_sq, ExplicitDistribution, MassVector, PseudoDistribution};
use crate::error::{invalid, Error, Result};
use crate::testers::{Answer, IntervalPartition};

/// One draw from a YES or NO family.
#[derive(Debug, Clone, Serialize)]
pub struct HardInstancePair {
    pub family: String,
    pub label: Answer,
    /// Axis sizes of the measure(s); a single entry for 1-D families.
    pub dims: Vec<usize>,
    /// One measure, or `[p, q]` for two-distribution families.
    #[serde(serialize_with = "ser_measures")]
    pub measures: Vec<PseudoDistribution>,
    pub total_mass: f64,
    /// The exact distance statistic the certificate is derived from.
    pub distance_statistic: f64,
    /// Certified lower bound on the l1 (Hellinger for the Hellinger family)
    /// distance of the normalized instance to the property; NO draws only.
    pub certified_farness: Option<f64>,
    /// A NO draw whose statistic falls below the family's nominal bound.
    pub flagged: bool,
}

fn ser_measures<S: serde::Serializer>(
    m: &[PseudoDistribution],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for x in m {
        seq.serialize_element(x.mass())?;
    }
    seq.end()
}

impl HardInstancePair {
    /// Measure `i` scaled to a probability distribution.
    pub fn distribution(&self, i: usize) -> Result<ExplicitDistribution> {
        self.measures
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no measure {i}")))?
            .normalized()
    }
}

fn check_unit_eps(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        invalid(format!("epsilon {eps} outside [0, 1]"))
    }
}

fn sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Uniform on `[n]` and a paired perturbation of it: bins `2t, 2t+1` move
/// `+-eps/(2 floor(n/2))` in opposite directions, so the l1 distance is
/// exactly eps (and the l2 distance `eps / sqrt n` for even n).
pub fn paninski_pair<R: Rng + ?Sized>(
    n: usize,
    eps: f64,
    rng: &mut R,
) -> Result<(ExplicitDistribution, ExplicitDistribution)> {
    if n < 2 {
        return invalid("paninski pair needs n >= 2");
    }
    let pairs = n / 2;
    let delta = eps / (2 * pairs) as f64;
    let base = 1.0 / n as f64;
    if !(eps >= 0.0 && delta <= base) {
        return invalid(format!("epsilon {eps} too large for n = {n}"));
    }
    let mut p = vec![base; n];
    for t in 0..pairs {
        let s = sign(rng);
        p[2 * t] += s * delta;
        p[2 * t + 1] -= s * delta;
    }
    Ok((
        ExplicitDistribution::uniform(n),
        ExplicitDistribution::new(p)?,
    ))
}

/// `||nu - nu_1 x nu_2 / ||nu||_1||_1` for a measure on `[n] x [m]`. A
/// quarter of it (per unit mass) lower-bounds the distance to products.
pub fn product_distance(nu: &impl MassVector, n: usize, m: usize) -> Result<f64> {
    let v = nu.masses();
    if v.len() != n * m {
        return Err(Error::DimensionMismatch(n * m, v.len()));
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let rows: Vec<f64> = v.chunks(m).map(|r| r.iter().sum()).collect();
    let mut cols = vec![0.0; m];
    for r in v.chunks(m) {
        for (c, x) in cols.iter_mut().zip(r) {
            *c += x;
        }
    }
    Ok(v.chunks(m)
        .zip(&rows)
        .map(|(r, &ri)| {
            r.iter()
                .zip(&cols)
                .map(|(&x, &cj)| (x - ri * cj / total).abs())
                .sum::<f64>()
        })
        .sum())
}

/// `sum_i |p_i - mean of p over i's interval|`; half of it (per unit mass)
/// lower-bounds the l1 distance to every distribution flat on the partition.
pub fn flat_deviation(p: &impl MassVector, part: &IntervalPartition) -> Result<f64> {
    let v = p.masses();
    if v.len() != part.n() {
        return Err(Error::DimensionMismatch(part.n(), v.len()));
    }
    Ok((0..part.k())
        .map(|j| {
            let r = part.interval(j);
            let mean = v[r.clone()].iter().sum::<f64>() / r.len() as f64;
            v[r].iter().map(|x| (x - mean).abs()).sum::<f64>()
        })
        .sum())
}

fn product_pair(
    family: &str,
    label: Answer,
    n: usize,
    m: usize,
    mass: Vec<f64>,
    nominal: f64,
) -> Result<HardInstancePair> {
    let nu = PseudoDistribution::new(mass)?;
    let stat = product_distance(&nu, n, m)?;
    let total = nu.total();
    let no = label == Answer::No;
    Ok(HardInstancePair {
        family: family.to_string(),
        label,
        dims: vec![n, m],
        total_mass: total,
        distance_statistic: stat,
        certified_farness: no.then(|| stat / (4.0 * total)),
        flagged: no && stat < nominal,
        measures: vec![nu],
    })
}

/// YES: the uniform measure `1/(nm)`. NO: each cell independently
/// `(1 +- eps)/(nm)`.
pub fn product_yes_no_2d<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    eps: f64,
    rng: &mut R,
    which: Answer,
) -> Result<HardInstancePair> {
    check_unit_eps(eps)?;
    if n == 0 || m == 0 {
        return invalid("empty grid");
    }
    let base = 1.0 / (n * m) as f64;
    let mass = match which {
        Answer::Yes => vec![base; n * m],
        Answer::No => (0..n * m).map(|_| base * (1.0 + sign(rng) * eps)).collect(),
    };
    product_pair("product_2d", which, n, m, mass, eps / 16.0)
}

/// Rows are heavy (`c_i = 1/k`) with probability `k/n`, light (`1/n`)
/// otherwise. YES: `c_i / m` everywhere. NO: heavy rows stay `1/(km)`, light
/// cells become `(1 +- eps)/(nm)` independently.
pub fn heavy_light_yes_no_2d<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    k: usize,
    eps: f64,
    rng: &mut R,
    which: Answer,
) -> Result<HardInstancePair> {
    check_unit_eps(eps)?;
    if m == 0 || k == 0 || 2 * k > n {
        return invalid(format!(
            "heavy/light family needs 1 <= k <= n/2, got n={n} k={k}"
        ));
    }
    let p_heavy = k as f64 / n as f64;
    let mut mass = Vec::with_capacity(n * m);
    for _ in 0..n {
        let heavy = rng.random::<f64>() < p_heavy;
        for _ in 0..m {
            let x = if heavy {
                1.0 / (k * m) as f64
            } else {
                match which {
                    Answer::Yes => 1.0 / (n * m) as f64,
                    Answer::No => (1.0 + sign(rng) * eps) / (n * m) as f64,
                }
            };
            mass.push(x);
        }
    }
    product_pair("heavy_light_2d", which, n, m, mass, eps / 32.0)
}

/// Bins `0..n-1` are shared heavy `1/(2k)` with probability `min(k/n, 1/2)`;
/// otherwise YES puts `eps/n` on both sides and NO puts `2 eps/n` on one
/// random side only. The last bin holds `1/3` in both.
pub fn hellinger_pair<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    eps: f64,
    rng: &mut R,
    which: Answer,
) -> Result<HardInstancePair> {
    check_unit_eps(eps)?;
    if n < 2 || k == 0 {
        return invalid("hellinger family needs n >= 2 and k >= 1");
    }
    let p_heavy = (k as f64 / n as f64).min(0.5);
    let light = eps / n as f64;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n - 1 {
        if rng.random::<f64>() < p_heavy {
            p[i] = 1.0 / (2 * k) as f64;
            q[i] = p[i];
        } else if which == Answer::Yes {
            p[i] = light;
            q[i] = light;
        } else if rng.random::<bool>() {
            p[i] = 2.0 * light;
        } else {
            q[i] = 2.0 * light;
        }
    }
    p[n - 1] = 1.0 / 3.0;
    q[n - 1] = 1.0 / 3.0;
    let (p, q) = (PseudoDistribution::new(p)?, PseudoDistribution::new(q)?);
    let h2 = hellinger_sq(&p.normalized()?, &q.normalized()?)?;
    let no = which == Answer::No;
    Ok(HardInstancePair {
        family: "hellinger".to_string(),
        label: which,
        dims: vec![n],
        total_mass: p.total(),
        distance_statistic: h2,
        certified_farness: no.then_some(h2),
        flagged: no && h2 < eps / 4.0,
        measures: vec![p, q],
    })
}

/// `[n]` read as `[k] x [n/k]` with interval `i` the i-th row. YES rows are
/// flat; NO cells are `(1 +- eps)/n` independently.
pub fn histogram_hard_pair<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    eps: f64,
    rng: &mut R,
    which: Answer,
) -> Result<HardInstancePair> {
    check_unit_eps(eps)?;
    if k == 0 || !n.is_multiple_of(k) {
        return invalid(format!("k = {k} must divide n = {n}"));
    }
    if k == n && which == Answer::No {
        return invalid("every distribution is an n-histogram; no NO instance exists");
    }
    let base = 1.0 / n as f64;
    let mass: Vec<f64> = match which {
        Answer::Yes => vec![base; n],
        Answer::No => (0..n).map(|_| base * (1.0 + sign(rng) * eps)).collect(),
    };
    let nu = PseudoDistribution::new(mass)?;
    let part = IntervalPartition::equal(n, k)?;
    let stat = flat_deviation(&nu, &part)? / nu.total();
    let no = which == Answer::No;
    Ok(HardInstancePair {
        family: "histogram".to_string(),
        label: which,
        dims: vec![k, n / k],
        total_mass: nu.total(),
        distance_statistic: stat,
        certified_farness: no.then_some(stat / 2.0),
        flagged: no && stat < eps / 8.0,
        measures: vec![nu],
    })
}
