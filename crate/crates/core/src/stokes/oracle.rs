//! Sectorial canonical bases seeded from the least-term truncated formal
//! series and transported by the integrator, and the Stokes matrices
//! relating them.

use std::f64::consts::TAU;

use super::normal_form::{formal_normal_form, FormalNormalForm, TruncatedNormalization};
use crate::error::{LabError, Result};
use crate::family::{is_good_sector, ConfluentFamily, Sector};
use crate::integrator::{transfer, CoefficientField, Path, PathSegment, TransferOptions};
use crate::linalg;
use crate::{CMat, C64};

/// Number of series coefficients computed.
pub const SERIES_ORDER: usize = 80;
/// Largest admissible least term at the matching radius.
pub const LEAST_TERM_TOL: f64 = 1e-9;
/// Local tolerance for transporting canonical bases.
pub const ORACLE_TOL: f64 = 1e-12;

/// Optimal truncation of the normalizing series at a radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastTerm {
    pub radius: f64,
    /// Terms `m < n_star` are summed; `H_{n_star} r^{n_star}` is the least term.
    pub n_star: usize,
    pub min_term: f64,
}

/// Least term of `Σ ‖H_m‖ r^m` over `m ≥ 1`.
pub fn least_term(trunc: &TruncatedNormalization, r: f64) -> LeastTerm {
    let terms = trunc.term_norms(r);
    let mut best = (1usize, f64::INFINITY);
    for (m, &v) in terms.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (m, v);
        }
    }
    if terms.len() <= 1 {
        best = (1, 0.0);
    }
    LeastTerm {
        radius: r,
        n_star: best.0,
        min_term: best.1,
    }
}

/// Largest radius on a geometric grid from 0.5 whose least term is `≤ tol`.
pub fn matching_radius(trunc: &TruncatedNormalization, tol: f64) -> Result<LeastTerm> {
    let mut r = 0.5;
    for _ in 0..400 {
        let lt = least_term(trunc, r);
        if lt.min_term <= tol {
            return Ok(lt);
        }
        r *= 0.98;
    }
    Err(LabError::MatchingRadiusTooLarge(
        least_term(trunc, r).min_term,
    ))
}

/// Permutation listing indices by increasing `Re(λ_j / t^k)`.
pub fn triangularity_order(lambda: &[C64], t: C64, k: i32) -> Result<Vec<usize>> {
    let tk = t.powi(k);
    let vals: Vec<f64> = lambda.iter().map(|l| (l / tk).re).collect();
    let scale = vals
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..lambda.len()).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    for w in idx.windows(2) {
        if (vals[w[1]] - vals[w[0]]).abs() <= 1e-12 * scale {
            return Err(LabError::OrderingTie);
        }
    }
    Ok(idx)
}

/// Stokes data of the irregular equation `t² ż = A(t) z`.
#[derive(Debug, Clone)]
pub struct StokesPair {
    /// Left-component Stokes matrix, projected to exact unipotent form.
    pub c0: CMat,
    /// Right-component Stokes matrix, projected.
    pub c1: CMat,
    pub c0_raw: CMat,
    pub c1_raw: CMat,
    /// Largest deviation from unipotent-triangular shape before projection.
    pub deviation0: f64,
    pub deviation1: f64,
    pub t_left: C64,
    pub t_right: C64,
    /// `Z⁰(t_left)`, `Z¹(t_left)`, `Z¹(t_right)`, `Z²(t_right)`.
    pub z0_left: CMat,
    pub z1_left: CMat,
    pub z1_right: CMat,
    pub z2_right: CMat,
}

impl StokesPair {
    /// `Z¹ Z⁰⁻¹` at `t_left`: the operator on initial values that `C₀` induces.
    pub fn left_operator(&self) -> Result<CMat> {
        Ok(&self.z1_left * linalg::inverse(&self.z0_left)?)
    }

    /// `Z² Z¹⁻¹` at `t_right`.
    pub fn right_operator(&self) -> Result<CMat> {
        Ok(&self.z2_right * linalg::inverse(&self.z1_right)?)
    }

    /// `(C₀, C₁)` after rescaling the bases so that `Z⁰(t_left)` has unit
    /// pivots (component `j` of column `j`).
    pub fn pivot_normalized(&self) -> (CMat, CMat) {
        let p = linalg::pivot_divisors(&self.z0_left);
        let conj = |m: &CMat| CMat::from_fn(m.nrows(), m.ncols(), |a, b| m[(a, b)] * p[a] / p[b]);
        (conj(&self.c0), conj(&self.c1))
    }
}

/// Formal data, truncation and transport for one irregular equation.
#[derive(Debug, Clone)]
pub struct StokesOracle {
    coeffs: Vec<CMat>,
    p: CMat,
    fnf: FormalNormalForm,
    trunc: TruncatedNormalization,
    least: LeastTerm,
    freedom: Vec<C64>,
}

impl StokesOracle {
    /// `coeffs[m]` multiplies `t^m` in `A(t)`. Eigenvalues of `A(0)` are
    /// ordered by increasing `Re(λ / direction)`.
    pub fn new(coeffs: Vec<CMat>, direction: C64) -> Result<Self> {
        let a0 = coeffs
            .first()
            .ok_or_else(|| LabError::InvalidArgument("empty coefficient list".into()))?;
        let n = a0.nrows();
        let (p, lambda) = diagonalize(a0, direction)?;
        let p_inv = linalg::inverse(&p)?;
        let mut conj: Vec<CMat> = coeffs.iter().map(|m| &p_inv * m * &p).collect();
        // exact diagonal leading term in the new frame
        conj[0] = linalg::diag(&lambda);
        let (fnf, trunc) = formal_normal_form(&conj, SERIES_ORDER)?;
        let least = matching_radius(&trunc, LEAST_TERM_TOL)?;
        Ok(StokesOracle {
            coeffs,
            p,
            fnf,
            trunc,
            least,
            freedom: vec![C64::new(1.0, 0.0); n],
        })
    }

    /// Oracle for the limit equation of a family, ordered like its monodromy
    /// eigenvalues (increasing `Re(λ/(iα₀))`).
    pub fn from_family(fam: &ConfluentFamily) -> Result<Self> {
        let (a0, _) = fam.singularities(1.0)?;
        Self::new(fam.limit_coeffs(), C64::new(0.0, 1.0) * a0)
    }

    /// Re-seeds at radius `r`.
    pub fn with_radius(mut self, r: f64) -> Result<Self> {
        let lt = least_term(&self.trunc, r);
        if !(r > 0.0) || lt.min_term > LEAST_TERM_TOL {
            return Err(LabError::MatchingRadiusTooLarge(lt.min_term));
        }
        self.least = lt;
        Ok(self)
    }

    /// Replaces `Ĥ` by `Ĥ diag(d)`, which multiplies every canonical basis
    /// on the right by `diag(d)`.
    pub fn with_diagonal_freedom(mut self, d: &[C64]) -> Result<Self> {
        if d.len() != self.freedom.len() || d.iter().any(|z| z.norm() == 0.0) {
            return Err(LabError::InvalidArgument(
                "need one nonzero factor per column".into(),
            ));
        }
        self.freedom = d.to_vec();
        Ok(self)
    }

    pub fn normal_form(&self) -> &FormalNormalForm {
        &self.fnf
    }

    pub fn normalization(&self) -> &TruncatedNormalization {
        &self.trunc
    }

    pub fn least_term(&self) -> LeastTerm {
        self.least
    }

    pub fn lambda(&self) -> &[C64] {
        &self.fnf.lambda
    }

    pub fn field(&self) -> Result<CoefficientField> {
        CoefficientField::new(self.coeffs.clone(), vec![C64::new(0.0, 0.0); 2])
    }

    /// `P Ĥ_{N*}(t) W(t)` with `arg t` taken as `arg` for the `t^β` factors.
    pub fn seed(&self, t: C64, arg: f64) -> CMat {
        let h = self.trunc.partial_sum(t, self.least.n_star);
        let lnt = C64::new(t.norm().ln(), arg);
        let w: Vec<C64> = (0..self.fnf.lambda.len())
            .map(|i| self.freedom[i] * (-self.fnf.lambda[i] / t + self.fnf.beta[i] * lnt).exp())
            .collect();
        &self.p * h * linalg::diag(&w)
    }

    /// Size of the first omitted series term at the matching radius.
    pub fn seed_error_estimate(&self) -> f64 {
        self.least.min_term
    }

    /// Canonical basis of `sector` at `t`: seeded on the bisector at the
    /// matching radius, moved radially to `|t|`, then along the arc to `t`.
    pub fn canonical_basis(&self, sector: &Sector, t: C64) -> Result<CMat> {
        let phi = sector.theta1 + (t.arg() - sector.theta1).rem_euclid(TAU);
        if !(phi > sector.theta1 && phi < sector.theta2) {
            return Err(LabError::InvalidArgument(format!(
                "{t} is outside the sector"
            )));
        }
        let theta = sector.bisector();
        let r0 = self.least.radius;
        let seed_pt = C64::from_polar(r0, theta);
        let seed = self.seed(seed_pt, theta);
        let mut segs = Vec::new();
        let rho = t.norm();
        if (rho - r0).abs() > 0.0 {
            segs.push(PathSegment::line(seed_pt, C64::from_polar(rho, theta))?);
        }
        if phi != theta {
            segs.push(PathSegment::arc(C64::new(0.0, 0.0), rho, theta, phi)?);
        }
        if segs.is_empty() {
            return Ok(seed);
        }
        let path = Path::new(segs)?;
        let field = self.field()?;
        let report = transfer(&field, &path, &TransferOptions::with_tol(ORACLE_TOL))?;
        Ok(report.matrix.to_matrix() * seed)
    }

    /// Stokes matrices for the sector pair, read off at `t_left` (left
    /// component of `S₀ ∩ S₁`) and `-t_left` (right component, reached
    /// counterclockwise from `S₁`).
    pub fn stokes_matrices(&self, s0: &Sector, s1: &Sector, t_left: C64) -> Result<StokesPair> {
        for i in 0..720 {
            let phi = TAU * i as f64 / 720.0;
            if !s0.contains_direction(phi) && !s1.contains_direction(phi) {
                return Err(LabError::CoverFailure);
            }
        }
        let lambda = self.lambda();
        if !is_good_sector(s0, 1, lambda) || !is_good_sector(s1, 1, lambda) {
            return Err(LabError::InvalidArgument("sectors are not good".into()));
        }
        let s2 = s0.rotated(TAU);
        let t_right = -t_left;
        if !(s0.contains_direction(t_left.arg()) && s1.contains_direction(t_left.arg())) {
            return Err(LabError::InvalidArgument(format!(
                "{t_left} is not in the left intersection"
            )));
        }
        let z0_left = self.canonical_basis(s0, t_left)?;
        let z1_left = self.canonical_basis(s1, t_left)?;
        let z1_right = self.canonical_basis(s1, t_right)?;
        let z2_right = self.canonical_basis(&s2, t_right)?;
        let c0_raw = linalg::inverse(&z0_left)? * &z1_left;
        let c1_raw = linalg::inverse(&z1_right)? * &z2_right;
        let order_l = triangularity_order(lambda, t_left, 1)?;
        let order_r = triangularity_order(lambda, t_right, 1)?;
        let (c0, deviation0) = project_unipotent(&c0_raw, &order_l);
        let (c1, deviation1) = project_unipotent(&c1_raw, &order_r);
        Ok(StokesPair {
            c0,
            c1,
            c0_raw,
            c1_raw,
            deviation0,
            deviation1,
            t_left,
            t_right,
            z0_left,
            z1_left,
            z1_right,
            z2_right,
        })
    }
}

/// Projects onto unipotent matrices that are lower-triangular with respect
/// to `order` (entry `(a,b)` may be nonzero only when `a` comes after `b`).
/// Returns the projection and the size of what was removed.
pub fn project_unipotent(c: &CMat, order: &[usize]) -> (CMat, f64) {
    let n = c.nrows();
    let mut pos = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    let mut out = c.clone();
    let mut dev: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                dev = dev.max((c[(a, a)] - C64::new(1.0, 0.0)).norm());
                out[(a, a)] = C64::new(1.0, 0.0);
            } else if pos[a] < pos[b] {
                dev = dev.max(c[(a, b)].norm());
                out[(a, b)] = C64::new(0.0, 0.0);
            }
        }
    }
    (out, dev)
}

/// `A(0) = P Λ P⁻¹` with `Λ` ordered by increasing `Re(λ/direction)`.
fn diagonalize(a0: &CMat, direction: C64) -> Result<(CMat, Vec<C64>)> {
    let n = a0.nrows();
    let scale = linalg::max_norm(a0).max(f64::MIN_POSITIVE);
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || a0[(i, j)].norm() <= 1e-15 * scale));
    let eig = if is_diag {
        (0..n).map(|i| a0[(i, i)]).collect()
    } else {
        linalg::eigenvalues(a0)?
    };
    for i in 0..n {
        for j in i + 1..n {
            if (eig[i] - eig[j]).norm() <= 1e-12 * scale {
                return Err(LabError::ResonantLeadingMatrix);
            }
        }
    }
    let key: Vec<f64> = eig.iter().map(|l| (l / direction).re).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    let kscale = key.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if idx
        .windows(2)
        .any(|w| key[w[1]] - key[w[0]] <= 1e-12 * kscale)
    {
        return Err(LabError::OrderingTie);
    }
    let lambda: Vec<C64> = idx.iter().map(|&i| eig[i]).collect();
    let mut p = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        if is_diag {
            p[(i, col)] = C64::new(1.0, 0.0);
        } else {
            let v = linalg::eigenvector(a0, eig[i])?;
            p.set_column(col, &v);
        }
    }
    if !is_diag {
        p = linalg::pivot_normalize(&p);
    }
    Ok((p, lambda))
}
