use crate::error::{Error, Result};

use super::types::{ExplicitDistribution, MassVector, PseudoDistribution};

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() == q.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(p.len(), q.len()))
    }
}

pub fn l1_distance(p: &impl MassVector, q: &impl MassVector) -> Result<f64> {
    let (p, q) = (p.masses(), q.masses());
    same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

pub fn l2_distance(p: &impl MassVector, q: &impl MassVector) -> Result<f64> {
    let (p, q) = (p.masses(), q.masses());
    same_len(p, q)?;
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

pub fn l2_norm(p: &impl MassVector) -> f64 {
    p.masses().iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(sum q_i^{2/3})^{3/2}`.
pub fn l23_quasinorm(q: &impl MassVector) -> f64 {
    q.masses()
        .iter()
        .map(|x| x.powf(2.0 / 3.0))
        .sum::<f64>()
        .powf(1.5)
}

/// `(1/2) * sum (sqrt p_i - sqrt q_i)^2`.
pub fn hellinger_sq(p: &impl MassVector, q: &impl MassVector) -> Result<f64> {
    let (p, q) = (p.masses(), q.masses());
    same_len(p, q)?;
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    Ok(0.5 * s)
}

/// `sum (p_i - q_i)^2 / q_i`, infinite when p has mass where q has none.
pub fn chi_sq(p: &impl MassVector, q: &impl MassVector) -> Result<f64> {
    let (p, q) = (p.masses(), q.masses());
    same_len(p, q)?;
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if b == 0.0 {
            if a > 0.0 {
                return Ok(f64::INFINITY);
            }
        } else {
            s += (a - b) * (a - b) / b;
        }
    }
    Ok(s)
}

fn check_subset(n: usize, s: &[usize]) -> Result<()> {
    match s.iter().find(|&&i| i >= n) {
        Some(&i) => Err(Error::InvalidArgument(format!(
            "bin {i} outside domain of size {n}"
        ))),
        None => Ok(()),
    }
}

/// `p[S]`: keeps mass on S, zero elsewhere.
pub fn restrict(p: &impl MassVector, s: &[usize]) -> Result<PseudoDistribution> {
    let p = p.masses();
    check_subset(p.len(), s)?;
    let mut mass = vec![0.0; p.len()];
    for &i in s {
        mass[i] = p[i];
    }
    PseudoDistribution::new(mass)
}

/// `(p|S)` over S, in the order the indices are given.
pub fn condition(p: &impl MassVector, s: &[usize]) -> Result<ExplicitDistribution> {
    let p = p.masses();
    check_subset(p.len(), s)?;
    let w: Vec<f64> = s.iter().map(|&i| p[i]).collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    ExplicitDistribution::new(w.into_iter().map(|x| x / total).collect())
}
