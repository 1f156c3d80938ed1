//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::DVector;

use crate::error::{LabError, Result};
use crate::{CMat, C64};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest entry modulus.
pub fn max_norm(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_norm_vec(v: &DVector<C64>) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Max-norm of the difference.
pub fn max_diff(a: &CMat, b: &CMat) -> f64 {
    max_norm(&(a - b))
}

pub fn det(m: &CMat) -> C64 {
    m.clone().lu().determinant()
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let scale = max_norm(m);
    if scale == 0.0 || !scale.is_finite() {
        return Err(LabError::SingularMatrix("zero or non-finite matrix".into()));
    }
    let lu = m.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| LabError::SingularMatrix(format!("{n}x{n} LU breakdown")))?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::SingularMatrix("non-finite inverse".into()));
    }
    Ok(inv)
}

/// Solves `m x = b` for a matrix right-hand side.
pub fn solve(m: &CMat, b: &CMat) -> Result<CMat> {
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| LabError::SingularMatrix("solve".into()))
}

/// Eigenvalues via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 2 {
        let s = max_norm(m);
        if s == 0.0 {
            return Ok(vec![C64::new(0.0, 0.0); 2]);
        }
        let (a, b, cc, d) = (
            m[(0, 0)].unscale(s),
            m[(0, 1)].unscale(s),
            m[(1, 0)].unscale(s),
            m[(1, 1)].unscale(s),
        );
        let (l1, l2) = quadratic_roots(a + d, a * d - b * cc);
        return Ok(vec![l1 * s, l2 * s]);
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::SingularMatrix("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Roots of `x^2 - tr x + det`, larger modulus first, computed without
/// cancellation (the small root comes from the product).
pub fn quadratic_roots(tr: C64, det: C64) -> (C64, C64) {
    // scale so that neither tr² nor det overflows
    let s = tr.norm().max(det.norm().sqrt());
    if s == 0.0 {
        return (tr, tr);
    }
    let (t, d) = (tr.unscale(s), det.unscale(s).unscale(s));
    let disc = (t * t - d * 4.0).sqrt();
    let plus = t + disc;
    let minus = t - disc;
    let big = if plus.norm() >= minus.norm() {
        plus
    } else {
        minus
    } * 0.5;
    ((big * s), (d / big) * s)
}

/// Eigenvector for an (approximate) eigenvalue by inverse iteration, max-norm 1.
pub fn eigenvector(m: &CMat, lambda: C64) -> Result<DVector<C64>> {
    let n = m.nrows();
    let scale = max_norm(m).max(lambda.norm()).max(f64::MIN_POSITIVE);
    let mut shift = lambda;
    for attempt in 0..6 {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| c(1.0, 0.37 * (i as f64 + 1.0)));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let nrm = max_norm_vec(&x);
                    if nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = x.map(|z| z.unscale(nrm));
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(normalize_max(v));
        }
        // exactly singular shift: nudge it and retry
        shift = lambda + c(1.0, 0.5) * scale * 1e-14 * (1u64 << (2 * attempt)) as f64;
    }
    Err(LabError::SingularMatrix("inverse iteration failed".into()))
}

/// Scales a vector so its largest-modulus entry is real and equals one.
pub fn normalize_max(v: DVector<C64>) -> DVector<C64> {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let p = v[best];
    if p.norm() == 0.0 {
        return v;
    }
    v / p
}

/// Per-column pivot: the `j`-th component, or the largest component when
/// that one is negligible.
pub fn pivot_divisors(m: &CMat) -> Vec<C64> {
    (0..m.ncols())
        .map(|j| {
            let col = m.column(j);
            let big = col.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            if col[j].norm() > 1e-8 * big {
                col[j]
            } else {
                let idx = (0..col.len())
                    .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
                    .unwrap_or(0);
                col[idx]
            }
        })
        .collect()
}

/// Each column divided by its pivot (see [`pivot_divisors`]).
pub fn pivot_normalize(m: &CMat) -> CMat {
    let mut out = m.clone();
    for (j, p) in pivot_divisors(m).into_iter().enumerate() {
        if p.norm() > 0.0 {
            for i in 0..m.nrows() {
                out[(i, j)] = m[(i, j)] / p;
            }
        }
    }
    out
}

pub fn diag(values: &[C64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = *v;
    }
    m
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
