//! Plain-text family files.
//!
//! ```text
//! # comment
//! n = 2
//! lambda_1 = 1,0
//! lambda_2 = -1,0
//! alphac = 0,1
//! A t^0 eps^0 = 1,0 0,0 0,0 -1,0
//! A t^1 eps^0 = 0,0 0.3,0 0.3,0 0,0
//! ```
//!
//! Matrices are row-major. Numbers are written with the shortest
//! representation that parses back to the same double.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{ConfluentFamily, PolyMatrix};
use crate::error::{LabError, Result};
use crate::{CMat, C64};

fn perr(line: usize, msg: impl Into<String>) -> LabError {
    LabError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_complex(s: &str, line: usize) -> Result<C64> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| perr(line, format!("expected re,im but found '{s}'")))?;
    let re: f64 = re
        .trim()
        .parse()
        .map_err(|_| perr(line, format!("bad real part '{re}'")))?;
    let im: f64 = im
        .trim()
        .parse()
        .map_err(|_| perr(line, format!("bad imaginary part '{im}'")))?;
    if !re.is_finite() || !im.is_finite() {
        return Err(perr(line, "non-finite number"));
    }
    Ok(C64::new(re, im))
}

/// Parses `A t^p eps^q`.
fn parse_term_key(key: &str, line: usize) -> Result<(u32, u32)> {
    let mut parts = key.split_whitespace();
    let head = parts.next();
    let tp = parts.next();
    let ep = parts.next();
    if head != Some("A") || parts.next().is_some() {
        return Err(perr(line, format!("unknown key '{key}'")));
    }
    let p = tp
        .and_then(|s| s.strip_prefix("t^"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(line, "expected t^<p>"))?;
    let q = ep
        .and_then(|s| s.strip_prefix("eps^"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(line, "expected eps^<q>"))?;
    Ok((p, q))
}

pub fn parse(text: &str) -> Result<ConfluentFamily> {
    let mut n: Option<(usize, usize)> = None;
    let mut alphac: Option<C64> = None;
    let mut lambdas: BTreeMap<usize, (C64, usize)> = BTreeMap::new();
    let mut terms: Vec<((u32, u32), Vec<C64>, usize)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| perr(line, "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "n" {
            let v: usize = value
                .parse()
                .map_err(|_| perr(line, "n must be a positive integer"))?;
            if v == 0 || n.is_some() {
                return Err(perr(line, "n must be a positive integer given once"));
            }
            n = Some((v, line));
        } else if key == "alphac" {
            if alphac.is_some() {
                return Err(perr(line, "alphac given twice"));
            }
            alphac = Some(parse_complex(value, line)?);
        } else if let Some(j) = key.strip_prefix("lambda_") {
            let j: usize = j.parse().map_err(|_| perr(line, "bad lambda index"))?;
            if j == 0 || lambdas.contains_key(&j) {
                return Err(perr(line, "lambda index must be 1-based and unique"));
            }
            lambdas.insert(j, (parse_complex(value, line)?, line));
        } else if key.starts_with('A') {
            let pq = parse_term_key(key, line)?;
            let entries = value
                .split_whitespace()
                .map(|s| parse_complex(s, line))
                .collect::<Result<Vec<_>>>()?;
            terms.push((pq, entries, line));
        } else {
            return Err(perr(line, format!("unknown key '{key}'")));
        }
    }

    let end = last_line + 1;
    let (n, n_line) = n.ok_or_else(|| perr(end, "missing n"))?;
    let alphac = alphac.ok_or_else(|| perr(end, "missing alphac"))?;
    let mut a = PolyMatrix::new(n);
    for ((p, q), entries, line) in terms {
        if entries.len() != n * n {
            return Err(perr(
                line,
                format!("expected {} entries, found {}", n * n, entries.len()),
            ));
        }
        a.add_term(p, q, CMat::from_row_slice(n, n, &entries))
            .map_err(|e| perr(line, e.to_string()))?;
    }
    if a.terms().next().is_none() {
        return Err(perr(end, "no A terms"));
    }
    if lambdas.is_empty() {
        return ConfluentFamily::from_matrix(a, alphac).map_err(|e| perr(n_line, e.to_string()));
    }
    if lambdas.len() != n || lambdas.keys().copied().ne(1..=n) {
        return Err(perr(end, format!("expected lambda_1 .. lambda_{n}")));
    }
    let first_lambda_line = lambdas.values().map(|v| v.1).min().unwrap_or(end);
    let lambda: Vec<C64> = lambdas.values().map(|v| v.0).collect();
    ConfluentFamily::new(a, alphac, lambda).map_err(|e| perr(first_lambda_line, e.to_string()))
}

fn fmt_c(z: C64) -> String {
    format!("{},{}", z.re, z.im)
}

pub fn serialize(fam: &ConfluentFamily) -> String {
    let mut s = String::new();
    let n = fam.dim();
    let _ = writeln!(s, "n = {n}");
    for (j, l) in fam.lambda().iter().enumerate() {
        let _ = writeln!(s, "lambda_{} = {}", j + 1, fmt_c(*l));
    }
    let _ = writeln!(s, "alphac = {}", fmt_c(fam.alpha_c()));
    for (&(p, q), m) in fam.matrix().terms() {
        let mut row = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                row.push(fmt_c(m[(i, j)]));
            }
        }
        let _ = writeln!(s, "A t^{p} eps^{q} = {}", row.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_round_trip() {
        for fam in [
            ConfluentFamily::euler(),
            ConfluentFamily::t3(),
            ConfluentFamily::t2(0.7),
        ] {
            let text = fam.to_text();
            let back = parse(&text).unwrap();
            assert_eq!(back, fam);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn error_lines() {
        let bad = "n = 2\nalphac = 0,1\nA t^0 eps^0 = 1,0 0,0 0,0\n";
        assert!(matches!(parse(bad), Err(LabError::Parse { line: 3, .. })));
        let bad = "# header\nn = 2\nalphac = zero\n";
        assert!(matches!(parse(bad), Err(LabError::Parse { line: 3, .. })));
        let bad = "n = 2\nfoo = 1\n";
        assert!(matches!(parse(bad), Err(LabError::Parse { line: 2, .. })));
        let e = parse("n = 2\nfoo = 1\n").unwrap_err();
        assert!(e.to_string().starts_with("ParseError:2"));
    }

    #[test]
    fn lambda_defaults_to_eigenvalues() {
        let f = parse("n = 2\nalphac = 0,1\nA t^0 eps^0 = -1,0 0,0 0,0 1,0\n").unwrap();
        assert_eq!(f.lambda(), &[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e3f64..1e3,
            (-300i32..300, -1.0f64..1.0).prop_map(|(e, m)| m * 10f64.powi(e)),
        ]
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(
            l1 in finite(), l2 in finite(), off in proptest::collection::vec(finite(), 8),
            cre in finite(), cim in 1e-3f64..10.0, q in 0u32..3,
        ) {
            prop_assume!(l1 != l2);
            let mut a = PolyMatrix::new(2);
            a.add_term(0, 0, crate::linalg::diag(&[C64::new(l1, 0.0), C64::new(l2, 0.0)])).unwrap();
            let m = CMat::from_row_slice(2, 2, &[
                C64::new(off[0], off[1]), C64::new(off[2], off[3]),
                C64::new(off[4], off[5]), C64::new(off[6], off[7]),
            ]);
            a.add_term(1, q, m).unwrap();
            let fam = ConfluentFamily::new(a, C64::new(cre, cim), vec![C64::new(l1, 0.0), C64::new(l2, 0.0)]).unwrap();
            let back = parse(&fam.to_text()).unwrap();
            prop_assert_eq!(back, fam);
        }
    }
}
