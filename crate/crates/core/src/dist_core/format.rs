//! Plain-text formats. Probabilities are written with 17 significant digits
//! so a write/read cycle reproduces every f64 bit for bit. Sample files are
//! 1-based on disk and 0-based in memory.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::types::{ExplicitDistribution, JointDistribution};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn data_lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<(usize, String)>> {
    r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
        Err(e) => Some(Err(Error::Io(e))),
    })
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{s}`")))
}

pub fn write_distribution<W: Write>(w: &mut W, probs: &[f64]) -> Result<()> {
    writeln!(w, "{}", probs.len())?;
    for p in probs {
        writeln!(w, "{p:.16e}")?;
    }
    Ok(())
}

fn read_probs<I: Iterator<Item = Result<(usize, String)>>>(
    lines: &mut I,
    n: usize,
) -> Result<Vec<f64>> {
    let mut probs = Vec::with_capacity(n);
    for item in lines {
        let (ln, t) = item?;
        for tok in t.split_whitespace() {
            probs.push(parse_num::<f64>(ln, tok)?);
        }
    }
    if probs.len() != n {
        return Err(parse_err(
            0,
            format!("expected {n} probabilities, found {}", probs.len()),
        ));
    }
    Ok(probs)
}

pub fn read_distribution<R: BufRead>(r: R) -> Result<ExplicitDistribution> {
    let mut lines = data_lines(r);
    let (ln, head) = lines.next().ok_or_else(|| parse_err(1, "empty input"))??;
    let n: usize = parse_num(ln, &head)?;
    let probs = read_probs(&mut lines, n)?;
    ExplicitDistribution::new(probs)
}

pub fn write_joint<W: Write>(w: &mut W, joint: &JointDistribution) -> Result<()> {
    let dims: Vec<String> = joint.dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "{} {}", dims.len(), dims.join(" "))?;
    for p in joint.flat().probs() {
        writeln!(w, "{p:.16e}")?;
    }
    Ok(())
}

pub fn read_joint<R: BufRead>(r: R) -> Result<JointDistribution> {
    let mut lines = data_lines(r);
    let (ln, head) = lines.next().ok_or_else(|| parse_err(1, "empty input"))??;
    let toks: Vec<usize> = head
        .split_whitespace()
        .map(|t| parse_num(ln, t))
        .collect::<Result<_>>()?;
    let (&d, dims) = toks
        .split_first()
        .ok_or_else(|| parse_err(ln, "missing dimension count"))?;
    if dims.len() != d {
        return Err(parse_err(
            ln,
            format!("header declares {d} dimensions but lists {}", dims.len()),
        ));
    }
    let size: usize = dims.iter().product();
    let probs = read_probs(&mut lines, size)?;
    JointDistribution::new(dims.to_vec(), probs)
}

fn one_based(ln: usize, tok: &str, n: usize) -> Result<usize> {
    let v: usize = parse_num(ln, tok)?;
    if v == 0 || v > n {
        return Err(parse_err(ln, format!("index {v} outside 1..={n}")));
    }
    Ok(v - 1)
}

pub fn write_samples<W: Write>(w: &mut W, samples: &[usize]) -> Result<()> {
    for s in samples {
        writeln!(w, "{}", s + 1)?;
    }
    Ok(())
}

pub fn read_samples<R: BufRead>(r: R, n: usize) -> Result<Vec<usize>> {
    data_lines(r)
        .map(|item| {
            let (ln, t) = item?;
            one_based(ln, &t, n)
        })
        .collect()
}

fn read_pairs<R: BufRead>(r: R, n1: usize, n2: usize) -> Result<Vec<(usize, usize)>> {
    data_lines(r)
        .map(|item| {
            let (ln, t) = item?;
            let toks: Vec<&str> = t.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(parse_err(ln, "expected two indices"));
            }
            Ok((one_based(ln, toks[0], n1)?, one_based(ln, toks[1], n2)?))
        })
        .collect()
}

fn write_pairs<W: Write>(w: &mut W, pairs: &[(usize, usize)]) -> Result<()> {
    for (a, b) in pairs {
        writeln!(w, "{} {}", a + 1, b + 1)?;
    }
    Ok(())
}

/// `i j` per line.
pub fn read_joint_samples<R: BufRead>(r: R, n: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    read_pairs(r, n, m)
}

pub fn write_joint_samples<W: Write>(w: &mut W, pairs: &[(usize, usize)]) -> Result<()> {
    write_pairs(w, pairs)
}

/// One 1-based index per axis on each line, returned as row-major flat
/// indices into `dims`.
pub fn read_tuple_samples<R: BufRead>(r: R, dims: &[usize]) -> Result<Vec<usize>> {
    data_lines(r)
        .map(|item| {
            let (ln, t) = item?;
            let toks: Vec<&str> = t.split_whitespace().collect();
            if toks.len() != dims.len() {
                return Err(parse_err(ln, format!("expected {} indices", dims.len())));
            }
            let mut flat = 0;
            for (tok, &d) in toks.iter().zip(dims) {
                flat = flat * d + one_based(ln, tok, d)?;
            }
            Ok(flat)
        })
        .collect()
}

/// `dist_index bin` per line.
pub fn read_labeled_samples<R: BufRead>(r: R, m: usize, n: usize) -> Result<Vec<(usize, usize)>> {
    read_pairs(r, m, n)
}

pub fn write_labeled_samples<W: Write>(w: &mut W, pairs: &[(usize, usize)]) -> Result<()> {
    write_pairs(w, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn distribution_round_trip_is_bit_exact(w in proptest::collection::vec(1e-9f64..1.0, 1..50)) {
            let d = ExplicitDistribution::from_weights(&w).unwrap();
            let mut buf = Vec::new();
            write_distribution(&mut buf, d.probs()).unwrap();
            let back = read_distribution(buf.as_slice()).unwrap();
            prop_assert_eq!(back.probs(), d.probs());
        }

        #[test]
        fn samples_round_trip(s in proptest::collection::vec(0usize..20, 0..100)) {
            let mut buf = Vec::new();
            write_samples(&mut buf, &s).unwrap();
            prop_assert_eq!(read_samples(buf.as_slice(), 20).unwrap(), s);
        }
    }

    #[test]
    fn joint_round_trip() {
        let w: Vec<f64> = (1..=12).map(|x| x as f64).collect();
        let total: f64 = w.iter().sum();
        let j = JointDistribution::new(vec![3, 4], w.iter().map(|x| x / total).collect()).unwrap();
        let mut buf = Vec::new();
        write_joint(&mut buf, &j).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("2 3 4\n"));
        let back = read_joint(buf.as_slice()).unwrap();
        assert_eq!(back, j);
    }

    #[test]
    fn sample_index_out_of_range_is_a_parse_error() {
        let err = read_samples("1\n5\n".as_bytes(), 4).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(read_samples("0\n".as_bytes(), 4).is_err());
    }

    #[test]
    fn pair_files() {
        let pairs = vec![(0, 1), (2, 0)];
        let mut buf = Vec::new();
        write_joint_samples(&mut buf, &pairs).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf), "1 2\n3 1\n");
        assert_eq!(read_joint_samples(buf.as_slice(), 3, 2).unwrap(), pairs);
        assert!(read_labeled_samples("1 2 3\n".as_bytes(), 3, 3).is_err());
    }
}
