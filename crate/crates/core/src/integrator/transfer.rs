//! Dormand–Prince 5(4) transport of a fundamental matrix along a path.

use super::{CoefficientField, Path, PathSegment, ScaledMatrix};
use crate::error::{LabError, Result};
use crate::{CMat, C64};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOptions {
    /// Local error per unit path length, relative to each solution column.
    pub tol: f64,
    /// Minimum allowed distance to a singularity. `None` means one eighth of
    /// the smallest distance between distinct singularities (zero when there
    /// is only one).
    pub d_min: Option<f64>,
    /// Smallest step, as a fraction of the segment parameter range.
    pub min_step: f64,
    pub max_steps: usize,
    /// Re-run every accepted step as two half steps and report the discrepancy.
    pub self_check: bool,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            tol: 1e-10,
            d_min: None,
            min_step: 1e-13,
            max_steps: 20_000_000,
            self_check: false,
        }
    }
}

impl TransferOptions {
    pub fn with_tol(tol: f64) -> Self {
        TransferOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Result of a transport with bookkeeping.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub matrix: ScaledMatrix,
    pub accepted: usize,
    pub rejected: usize,
    /// Column-relative distance to the half-step rerun, when requested.
    pub self_check_error: Option<f64>,
}

/// Transfer matrix `F` with `z(end) = F z(start)`, default options.
pub fn transfer_matrix(field: &CoefficientField, path: &Path, tol: f64) -> Result<ScaledMatrix> {
    Ok(transfer(field, path, &TransferOptions::with_tol(tol))?.matrix)
}

pub fn default_d_min(field: &CoefficientField) -> f64 {
    let s = field.singularities();
    let mut best = f64::INFINITY;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.min((s[i] - s[j]).norm());
        }
    }
    if best.is_finite() {
        best / 8.0
    } else {
        0.0
    }
}

/// Matrix state whose columns carry their own log scales.
#[derive(Clone)]
struct ColumnScaled {
    z: CMat,
    logs: Vec<f64>,
}

impl ColumnScaled {
    fn identity(n: usize) -> Self {
        ColumnScaled {
            z: CMat::identity(n, n),
            logs: vec![0.0; n],
        }
    }

    fn renormalize(&mut self) {
        for j in 0..self.z.ncols() {
            let nrm = col_norm(&self.z, j);
            if nrm > 0.0 && nrm.is_finite() && !(0.5..=2.0).contains(&nrm) {
                let mut col = self.z.column_mut(j);
                col.apply(|z| *z = z.unscale(nrm));
                self.logs[j] += nrm.ln();
            }
        }
    }

    fn into_scaled(self) -> ScaledMatrix {
        let top = self.logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = self.z;
        for (j, l) in self.logs.iter().enumerate() {
            let f = (l - top).exp();
            let mut col = z.column_mut(j);
            col *= C64::from(f);
        }
        ScaledMatrix::new(z, C64::new(top, 0.0))
    }
}

fn col_norm(z: &CMat, j: usize) -> f64 {
    z.column(j).iter().fold(0.0, |a, v| a.max(v.norm()))
}

struct Stepper<'a> {
    field: &'a CoefficientField,
    seg: &'a PathSegment,
}

impl Stepper<'_> {
    /// `B(γ(s)) γ'(s)`.
    fn generator(&self, s: f64) -> Result<CMat> {
        let t = self.seg.point(s);
        Ok(self.field.eval(t)? * self.seg.derivative(s))
    }

    /// One DOPRI5 step from `s` with step `h`; returns the fifth-order state,
    /// the error estimate and the derivative at the new point (FSAL).
    fn step(&self, s: f64, h: f64, y: &CMat, k1: &CMat) -> Result<(CMat, CMat, CMat)> {
        let hc = C64::from(h);
        let g = |sv: f64, yv: &CMat| -> Result<CMat> { Ok(self.generator(sv)? * yv) };
        let k2 = g(s + C2 * h, &(y + k1 * (hc * A21)))?;
        let k3 = g(
            s + C3 * h,
            &(y + (k1 * C64::from(A31) + &k2 * C64::from(A32)) * hc),
        )?;
        let k4 = g(
            s + C4 * h,
            &(y + (k1 * C64::from(A41) + &k2 * C64::from(A42) + &k3 * C64::from(A43)) * hc),
        )?;
        let k5 = g(
            s + C5 * h,
            &(y + (k1 * C64::from(A51)
                + &k2 * C64::from(A52)
                + &k3 * C64::from(A53)
                + &k4 * C64::from(A54))
                * hc),
        )?;
        let k6 = g(
            s + h,
            &(y + (k1 * C64::from(A61)
                + &k2 * C64::from(A62)
                + &k3 * C64::from(A63)
                + &k4 * C64::from(A64)
                + &k5 * C64::from(A65))
                * hc),
        )?;
        let y5 = y
            + (k1 * C64::from(B1)
                + &k3 * C64::from(B3)
                + &k4 * C64::from(B4)
                + &k5 * C64::from(B5)
                + &k6 * C64::from(B6))
                * hc;
        let k7 = g(s + h, &y5)?;
        let err = (k1 * C64::from(E1)
            + &k3 * C64::from(E3)
            + &k4 * C64::from(E4)
            + &k5 * C64::from(E5)
            + &k6 * C64::from(E6)
            + &k7 * C64::from(E7))
            * hc;
        Ok((y5, err, k7))
    }
}

/// Largest column-relative entry of `err`.
fn error_norm(err: &CMat, y0: &CMat, y1: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..err.ncols() {
        let scale = col_norm(y0, j).max(col_norm(y1, j));
        if scale > 0.0 {
            worst = worst.max(col_norm(err, j) / scale);
        }
    }
    worst
}

/// Adaptive transport with full bookkeeping.
pub fn transfer(
    field: &CoefficientField,
    path: &Path,
    opts: &TransferOptions,
) -> Result<TransferReport> {
    if !(opts.tol > 0.0) {
        return Err(LabError::InvalidArgument("tol must be positive".into()));
    }
    let d_min = opts.d_min.unwrap_or_else(|| default_d_min(field));
    let sing = field.singularities();
    if let Some((d, k)) = path.min_distance(&sing) {
        if d < d_min || d == 0.0 {
            return Err(LabError::PathTooCloseToSingularity {
                distance: d,
                singularity: format!("{}", sing[k]),
                d_min,
            });
        }
    }

    let n = field.dim();
    let mut state = ColumnScaled::identity(n);
    let mut check = if opts.self_check {
        Some(ColumnScaled::identity(n))
    } else {
        None
    };
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    for seg in path.segments() {
        let stepper = Stepper { field, seg };
        let len = seg.length();
        let mut s = 0.0f64;
        let mut k1 = stepper.generator(0.0)? * &state.z;
        let g0 = crate::linalg::max_norm(&stepper.generator(0.0)?);
        let mut h = (0.05 / g0.max(1e-300)).min(0.1);
        let mut prev_ratio: f64 = 1.0;
        while s < 1.0 {
            if accepted + rejected > opts.max_steps {
                return Err(LabError::StepUnderflow(h));
            }
            let last = s + h >= 1.0;
            let hh = if last { 1.0 - s } else { h };
            let (y5, err, k7) = stepper.step(s, hh, &state.z, &k1)?;
            let en = error_norm(&err, &state.z, &y5);
            let ratio = en / (opts.tol * len * hh);
            if ratio <= 1.0 && y5.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                if let Some(chk) = check.as_mut() {
                    half_steps(&stepper, s, hh, chk)?;
                }
                s = if last { 1.0 } else { s + hh };
                state.z = y5;
                k1 = k7;
                accepted += 1;
                let before = state.logs.clone();
                state.renormalize();
                if before != state.logs {
                    // rescale the cached derivative column by column
                    for j in 0..n {
                        let f = (before[j] - state.logs[j]).exp();
                        let mut col = k1.column_mut(j);
                        col *= C64::from(f);
                    }
                }
                let fac =
                    0.9 * ratio.max(1e-10).powf(-0.7 / 4.0) * prev_ratio.max(1e-4).powf(0.4 / 4.0);
                h = hh * fac.clamp(0.2, 5.0);
                prev_ratio = ratio;
            } else {
                rejected += 1;
                let fac = if ratio.is_finite() {
                    (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                h = hh * fac;
            }
            if h < opts.min_step && s < 1.0 {
                return Err(LabError::StepUnderflow(h));
            }
        }
    }

    let self_check_error = match check {
        Some(chk) => Some(state.clone().column_distance(&chk)),
        None => None,
    };
    Ok(TransferReport {
        matrix: state.into_scaled(),
        accepted,
        rejected,
        self_check_error,
    })
}

/// Advances `chk` over `[s, s+h]` with two fixed half steps.
fn half_steps(stepper: &Stepper<'_>, s: f64, h: f64, chk: &mut ColumnScaled) -> Result<()> {
    let half = 0.5 * h;
    for k in 0..2 {
        let s0 = s + half * k as f64;
        let k1 = stepper.generator(s0)? * &chk.z;
        let (y5, _, _) = stepper.step(s0, half, &chk.z, &k1)?;
        chk.z = y5;
    }
    chk.renormalize();
    Ok(())
}

impl ColumnScaled {
    /// Column-relative distance between two column-scaled states.
    fn column_distance(self, other: &ColumnScaled) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.z.ncols() {
            let shift = (other.logs[j] - self.logs[j]).exp();
            let na = col_norm(&self.z, j);
            let mut nd: f64 = 0.0;
            for i in 0..self.z.nrows() {
                nd = nd.max((self.z[(i, j)] - other.z[(i, j)] * shift).norm());
            }
            worst = worst.max(nd / na);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};
    use std::f64::consts::PI;

    fn euler_field(eps: f64) -> CoefficientField {
        CoefficientField::new(
            vec![diag(&[c(1.0, 0.0), c(-1.0, 0.0)])],
            vec![c(0.0, eps), c(0.0, -eps)],
        )
        .unwrap()
    }

    #[test]
    fn constant_diagonal_segment() {
        let f = CoefficientField::constant(diag(&[c(1.0, 0.0), c(-1.0, 0.0)]));
        let p = Path::segment(c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        let m = transfer_matrix(&f, &p, 1e-10).unwrap().to_matrix();
        let e = std::f64::consts::E;
        assert!((m[(0, 0)].re - e).abs() < 1e-9 * e);
        assert!((m[(1, 1)].re - 1.0 / e).abs() < 1e-9);
        assert!(m[(0, 1)].norm() == 0.0);
    }

    #[test]
    fn trivial_loop_is_identity() {
        let f = euler_field(0.5);
        let p = Path::circle(c(2.0, 0.0), 0.5, 0.0, true).unwrap();
        let m = transfer_matrix(&f, &p, 1e-10).unwrap();
        assert!(m.relative_distance(&ScaledMatrix::identity(2)) < 1e-9);
    }

    #[test]
    fn euler_circle() {
        let f = euler_field(0.5);
        let p = Path::circle(c(0.0, 0.5), 0.25, 0.0, true).unwrap();
        let m = transfer_matrix(&f, &p, 1e-10).unwrap().to_matrix();
        let big = (2.0 * PI).exp();
        assert!((m[(0, 0)] - c(big, 0.0)).norm() < 1e-8 * big);
        assert!((m[(1, 1)] - c(1.0 / big, 0.0)).norm() < 1e-8 / big);
        assert!((big - 535.4917).abs() < 1e-4);
    }

    #[test]
    fn too_close_rejected() {
        let f = euler_field(0.5);
        let p = Path::circle(c(0.0, 0.5), 0.1, 0.0, true).unwrap();
        assert!(matches!(
            transfer_matrix(&f, &p, 1e-10),
            Err(LabError::PathTooCloseToSingularity { .. })
        ));
    }

    #[test]
    fn self_check_is_small() {
        let f = euler_field(0.25);
        let p = Path::lasso(
            c(-0.5, 0.0),
            &Path::circle(c(0.0, 0.25), 0.125, -PI / 2.0 - 0.9, true).unwrap(),
        )
        .unwrap();
        let opts = TransferOptions {
            self_check: true,
            ..Default::default()
        };
        let r = transfer(&f, &p, &opts).unwrap();
        assert!(r.self_check_error.unwrap() < 1e-9);
    }

    #[test]
    fn zero_tol_rejected() {
        let f = euler_field(0.5);
        let p = Path::segment(c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        assert!(transfer(&f, &p, &TransferOptions::with_tol(0.0)).is_err());
    }
}
