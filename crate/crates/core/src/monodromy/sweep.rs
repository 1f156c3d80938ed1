use std::fmt::Write;

use rayon::prelude::*;

use super::eigen::{
    eigen_index, log_projective_multiplier, nearest_branch, principal_log, residue_log_eigenvalues,
    EigenData,
};
use super::transition::{commutator, transition_matrix, TransitionMatrix};
use super::{monodromy_operators, MonodromyPair};
use crate::error::{LabError, Result};
use crate::family::{associated_sectors, ConfluentFamily};
use crate::linalg;
use crate::stokes::{StokesOracle, StokesPair};
use crate::xnum::XComplex;
use crate::{CMat, C64};

/// Everything computed at one `ε` of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub eps: f64,
    pub pair: MonodromyPair,
    pub ed0: EigenData,
    pub ed1: EigenData,
    pub transition: TransitionMatrix,
}

const MAX_BISECTIONS: u32 = 40;

/// Residue logs at `eps_b`, continued from `logs_a` at `eps_a`; the interval
/// is bisected until every log moves by less than `π/2` in its imaginary part.
fn track(
    fam: &ConfluentFamily,
    eps_a: f64,
    logs_a: &[Vec<C64>; 2],
    eps_b: f64,
    depth: u32,
) -> Result<[Vec<C64>; 2]> {
    // the residue logs are analytic in ε, so their unwrapped change is the
    // true change of the eigenvalue argument
    let raw_a = residue_log_eigenvalues(fam, eps_a)?;
    let raw = residue_log_eigenvalues(fam, eps_b)?;
    let mut out = raw.clone();
    let mut smooth = true;
    for i in 0..2 {
        for (j, l) in raw[i].iter().enumerate() {
            if (l.im - raw_a[i][j].im).abs() >= std::f64::consts::FRAC_PI_2 {
                smooth = false;
            }
            out[i][j] = nearest_branch(*l, logs_a[i][j] + (l - raw_a[i][j]));
        }
    }
    if smooth {
        return Ok(out);
    }
    if depth >= MAX_BISECTIONS {
        return Err(LabError::InvalidArgument(format!(
            "eigenvalue branch could not be tracked between eps = {eps_a} and {eps_b}"
        )));
    }
    let mid = 0.5 * (eps_a + eps_b);
    let at_mid = track(fam, eps_a, logs_a, mid, depth + 1)?;
    track(fam, mid, &at_mid, eps_b, depth + 1)
}

/// Monodromy data along a decreasing grid. Operators are computed in
/// parallel; the eigenvalue branch is principal at the first `ε` and
/// continued along the grid.
pub fn sweep(
    fam: &ConfluentFamily,
    eps_grid: &[f64],
    t0: C64,
    tol: f64,
) -> Result<Vec<SweepPoint>> {
    if eps_grid.is_empty() {
        return Err(LabError::InvalidArgument("empty eps grid".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) || !(eps_grid[eps_grid.len() - 1] > 0.0) {
        return Err(LabError::InvalidArgument(
            "eps grid must be positive and strictly decreasing".into(),
        ));
    }
    let computed = eps_grid
        .par_iter()
        .map(|&eps| {
            let pair = monodromy_operators(fam, eps, t0, tol)?;
            let (ed0, ed1) = eigen_index(&pair, fam)?;
            Ok((pair, ed0, ed1))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut branch: Vec<[Vec<C64>; 2]> = Vec::with_capacity(eps_grid.len());
    let first = residue_log_eigenvalues(fam, eps_grid[0])?;
    branch.push([
        first[0].iter().map(|&l| principal_log(l)).collect(),
        first[1].iter().map(|&l| principal_log(l)).collect(),
    ]);
    for k in 1..eps_grid.len() {
        let next = track(fam, eps_grid[k - 1], &branch[k - 1], eps_grid[k], 0)?;
        branch.push(next);
    }

    computed
        .into_par_iter()
        .zip(branch.into_par_iter())
        .zip(eps_grid.par_iter())
        .map(|(((pair, mut ed0, mut ed1), logs), &eps)| {
            ed0.log_eigenvalues = logs[0].clone();
            ed1.log_eigenvalues = logs[1].clone();
            ed0.align_to(&logs[0]);
            ed1.align_to(&logs[1]);
            let transition = transition_matrix(&pair, &ed0, &ed1)?;
            Ok(SweepPoint {
                eps,
                pair,
                ed0,
                ed1,
                transition,
            })
        })
        .collect()
}

/// Stokes data of the limit equation, in the form the sweep compares with.
#[derive(Debug, Clone)]
pub struct OracleTarget {
    pub stokes: StokesPair,
    /// `Z¹ Z⁰⁻¹` at the base point.
    pub left_operator: CMat,
    /// `Z² Z¹⁻¹` at `-t0`.
    pub right_operator: CMat,
    /// `C₀` and `C₁` in bases whose columns have unit pivots at the base point.
    pub c0: CMat,
    pub c1: CMat,
}

impl OracleTarget {
    pub fn from_family(fam: &ConfluentFamily, t0: C64) -> Result<Self> {
        let oracle = StokesOracle::from_family(fam)?;
        let (s0, s1) = associated_sectors(fam)?;
        let stokes = oracle.stokes_matrices(&s0, &s1, t0)?;
        let left_operator = stokes.left_operator()?;
        let right_operator = stokes.right_operator()?;
        let (c0, c1) = stokes.pivot_normalized();
        Ok(OracleTarget {
            stokes,
            left_operator,
            right_operator,
            c0,
            c1,
        })
    }
}

/// One row of [`asymptotics_report`].
#[derive(Debug, Clone)]
pub struct AsymptoticsRow {
    pub eps: f64,
    pub log_l0: Vec<C64>,
    pub log_l1: Vec<C64>,
    /// `ln μ₀`, `ln μ₁` (`n = 2`; NaN otherwise).
    pub ln_mu0: C64,
    pub ln_mu1: C64,
    /// `ln λ₀₁ / ln λ₀₂`.
    pub ratio_l0: C64,
    /// `ln μ₀ / ln μ₁`.
    pub ratio_mu: C64,
    /// Transition matrix, saturating copy.
    pub c: CMat,
    /// Upper entry `C₁₂` in extended range.
    pub u: XComplex,
    /// `u / μ₁`.
    pub u_over_mu1: C64,
    /// `C_jk λ₁ₖ / λ₁ⱼ`.
    pub rescaled: CMat,
    pub commutator: CMat,
    pub det: C64,
    pub distance: Option<f64>,
    pub self_check: f64,
    pub numeric_discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct AsymptoticsReport {
    pub n: usize,
    pub d0: f64,
    pub d1: f64,
    pub rows: Vec<AsymptoticsRow>,
}

fn nan() -> C64 {
    C64::new(f64::NAN, f64::NAN)
}

pub fn asymptotics_report(
    fam: &ConfluentFamily,
    eps_grid: &[f64],
    t0: C64,
    tol: f64,
    d0: f64,
    d1: f64,
    oracle: Option<&OracleTarget>,
) -> Result<AsymptoticsReport> {
    let points = sweep(fam, eps_grid, t0, tol)?;
    let n = fam.dim();
    let rows = points
        .iter()
        .map(|p| {
            let (ln_mu0, ln_mu1) = if n == 2 {
                (
                    log_projective_multiplier(&p.ed0)?,
                    log_projective_multiplier(&p.ed1)?,
                )
            } else {
                (nan(), nan())
            };
            let l0 = &p.ed0.log_eigenvalues;
            let u = if n >= 2 {
                p.transition.upper_entry()
            } else {
                XComplex::ZERO
            };
            let u_over_mu1 = if u.is_zero() {
                C64::new(0.0, 0.0)
            } else {
                (u.ln() - ln_mu1).exp()
            };
            let rescaled = CMat::from_fn(n, n, |j, k| {
                (p.transition.c.get(j, k) * p.ed1.eigenvalue(k) / p.ed1.eigenvalue(j)).to_c64()
            });
            let k = commutator(&p.ed0, &p.ed1, &p.transition, d0, d1)?;
            Ok(AsymptoticsRow {
                eps: p.eps,
                log_l0: l0.clone(),
                log_l1: p.ed1.log_eigenvalues.clone(),
                ln_mu0,
                ln_mu1,
                ratio_l0: if n >= 2 { l0[0] / l0[1] } else { nan() },
                ratio_mu: ln_mu0 / ln_mu1,
                c: p.transition.matrix(),
                u,
                u_over_mu1,
                rescaled,
                distance: oracle.map(|o| k.distance_to(&o.left_operator)),
                det: k.det,
                commutator: k.operator,
                self_check: p.pair.self_check,
                numeric_discrepancy: p.ed0.numeric_discrepancy().max(p.ed1.numeric_discrepancy()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AsymptoticsReport { n, d0, d1, rows })
}

impl AsymptoticsReport {
    /// One row per `ε`.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = String::new();
        let mut head = vec!["eps".to_string()];
        for i in 0..2 {
            for j in 1..=n {
                head.push(format!("re_log_l{i}{j}"));
                head.push(format!("im_log_l{i}{j}"));
            }
        }
        for name in ["mu0", "mu1", "ln_mu0", "ln_mu1", "u", "u_over_mu1"] {
            head.push(format!("re_{name}"));
            head.push(format!("im_{name}"));
        }
        for j in 1..=n {
            for k in 1..=n {
                head.push(format!("re_k{j}{k}"));
                head.push(format!("im_k{j}{k}"));
            }
        }
        head.push("distance_to_C0".into());
        let _ = writeln!(s, "{}", head.join(","));
        for r in &self.rows {
            let mut f = vec![format!("{:e}", r.eps)];
            let mut push = |z: C64| {
                f.push(format!("{:e}", z.re));
                f.push(format!("{:e}", z.im));
            };
            for z in r.log_l0.iter().chain(&r.log_l1) {
                push(*z);
            }
            push(r.ln_mu0.exp());
            push(r.ln_mu1.exp());
            push(r.ln_mu0);
            push(r.ln_mu1);
            push(r.u.to_c64());
            push(r.u_over_mu1);
            for j in 0..n {
                for k in 0..n {
                    push(r.commutator[(j, k)]);
                }
            }
            f.push(r.distance.map_or("nan".into(), |d| format!("{d:e}")));
            let _ = writeln!(s, "{}", f.join(","));
        }
        s
    }

    /// Largest `|det - 1|` over the rows.
    pub fn max_det_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.det - 1.0).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_self_check(&self) -> f64 {
        self.rows.iter().map(|r| r.self_check).fold(0.0, f64::max)
    }
}

/// `‖C(ε) - C₀‖` entrywise, for the oracle's pivot-normalized `C₀`.
pub fn transition_distance(row: &AsymptoticsRow, oracle: &OracleTarget) -> f64 {
    linalg::max_diff(&row.c, &oracle.c0)
}
