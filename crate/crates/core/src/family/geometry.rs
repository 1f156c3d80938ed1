use std::f64::consts::{PI, TAU};

use super::ConfluentFamily;
use crate::error::{LabError, Result};
use crate::integrator::{Path, PathSegment};
use crate::C64;

/// Default minimal angle for the genericity check.
pub const DEFAULT_DELTA: f64 = PI / 6.0;

/// Angular slack used when deciding whether a ray lies on a sector boundary.
const ANGLE_TOL: f64 = 1e-12;

fn wrap(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Open sector `{0 < |t| < r, θ₁ < arg t < θ₂}` with vertex 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub theta1: f64,
    pub theta2: f64,
    pub radius: f64,
}

impl Sector {
    pub fn new(theta1: f64, theta2: f64, radius: f64) -> Result<Self> {
        let w = theta2 - theta1;
        if !(w > 0.0 && w < TAU) || !(radius > 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "sector ({theta1}, {theta2}) radius {radius} is not valid"
            )));
        }
        Ok(Sector {
            theta1,
            theta2,
            radius,
        })
    }

    pub fn width(&self) -> f64 {
        self.theta2 - self.theta1
    }

    pub fn bisector(&self) -> f64 {
        0.5 * (self.theta1 + self.theta2)
    }

    /// Position of the direction `phi` relative to the sector: the
    /// representative `phi + 2πm` measured from `θ₁`, in `[0, 2π)`.
    fn offset(&self, phi: f64) -> f64 {
        wrap(phi - self.theta1)
    }

    pub fn contains_direction(&self, phi: f64) -> bool {
        let o = self.offset(phi);
        o > ANGLE_TOL && o < self.width() - ANGLE_TOL
    }

    pub fn closure_contains_direction(&self, phi: f64) -> bool {
        let o = self.offset(phi);
        o <= self.width() + ANGLE_TOL || o >= TAU - ANGLE_TOL
    }

    pub fn contains(&self, t: C64) -> bool {
        t.norm() > 0.0 && t.norm() < self.radius && self.contains_direction(t.arg())
    }

    /// The same sector turned by `angle`.
    pub fn rotated(&self, angle: f64) -> Sector {
        Sector {
            theta1: self.theta1 + angle,
            theta2: self.theta2 + angle,
            radius: self.radius,
        }
    }
}

/// A sector with the segment between the two singular points removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitSector {
    pub base: Sector,
    pub slit: (C64, C64),
}

impl SlitSector {
    pub fn contains(&self, t: C64) -> bool {
        if !self.base.contains(t) {
            return false;
        }
        let (a, b) = self.slit;
        let d = b - a;
        let s = ((t - a) * d.conj()).re / d.norm_sqr();
        let off = ((t - a) * d.conj()).im.abs() / d.norm();
        !(off == 0.0 && (0.0..=1.0).contains(&s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayKind {
    ImaginaryDividing,
    RealDividing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    /// Direction in `[0, 2π)`.
    pub angle: f64,
    pub kind: RayKind,
    /// Eigenvalue pair `(i, j)` with `i < j` (0-based).
    pub pair: (usize, usize),
}

/// Rays where `Re((λ_j-λ_i)/t^k) = 0` (imaginary) or `Im(...) = 0` (real),
/// sorted by angle.
pub fn dividing_rays(k: u32, lambda: &[C64], kind: RayKind) -> Result<Vec<Ray>> {
    if k == 0 {
        return Err(LabError::InvalidArgument("rank must be positive".into()));
    }
    let mut rays = Vec::new();
    for i in 0..lambda.len() {
        for j in i + 1..lambda.len() {
            let d = lambda[j] - lambda[i];
            if d.norm() == 0.0 {
                return Err(LabError::RepeatedEigenvalues);
            }
            // Re(d e^{-ikθ}) = 0  ⇔  kθ = arg d + π/2 (mod π)
            let base = match kind {
                RayKind::ImaginaryDividing => d.arg() + PI / 2.0,
                RayKind::RealDividing => d.arg(),
            };
            for m in 0..2 * k {
                let angle = wrap((base + PI * m as f64) / k as f64);
                rays.push(Ray {
                    angle,
                    kind,
                    pair: (i, j),
                });
            }
        }
    }
    rays.sort_by(|a, b| a.angle.total_cmp(&b.angle).then(a.pair.cmp(&b.pair)));
    Ok(rays)
}

/// Exactly one imaginary dividing ray of every pair in the open sector and
/// exactly one in its closure.
pub fn is_good_sector(s: &Sector, k: u32, lambda: &[C64]) -> bool {
    let rays = match dividing_rays(k, lambda, RayKind::ImaginaryDividing) {
        Ok(r) => r,
        Err(_) => return false,
    };
    for i in 0..lambda.len() {
        for j in i + 1..lambda.len() {
            let pair: Vec<_> = rays.iter().filter(|r| r.pair == (i, j)).collect();
            let open = pair
                .iter()
                .filter(|r| s.contains_direction(r.angle))
                .count();
            let closed = pair
                .iter()
                .filter(|r| s.closure_contains_direction(r.angle))
                .count();
            if open != 1 || closed != 1 {
                return false;
            }
        }
    }
    true
}

/// Angle in `[0, π/2]` between two lines through the origin.
fn line_angle(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// The line through `α₀, α₁` meets every real dividing ray at an angle
/// `≥ delta` for each `ε` of the grid.
pub fn is_generic(fam: &ConfluentFamily, eps_list: &[f64], delta: f64) -> bool {
    let rays = match dividing_rays(1, fam.lambda(), RayKind::RealDividing) {
        Ok(r) => r,
        Err(_) => return false,
    };
    for &eps in eps_list {
        let (a0, a1) = match fam.singularities(eps) {
            Ok(p) => p,
            Err(_) => return false,
        };
        let dir = (a0 - a1).arg();
        if rays.iter().any(|r| line_angle(dir, r.angle) < delta) {
            return false;
        }
    }
    true
}

/// Grid on which genericity is checked when no grid is supplied.
pub fn default_eps_grid() -> Vec<f64> {
    (0..8).map(|k| 0.4 * 0.5f64.powi(k)).collect()
}

/// The two sectors `S₀ ∋ α₀`, `S₁ = S₀ + π`, each straddling half the
/// plane with margin `δ'` on both sides; the margin is shrunk until both
/// are good.
pub fn associated_sectors(fam: &ConfluentFamily) -> Result<(Sector, Sector)> {
    if !is_generic(fam, &default_eps_grid(), DEFAULT_DELTA) {
        return Err(LabError::NotGeneric);
    }
    let (a0, _) = fam.singularities(1.0)?;
    let center = a0.arg();
    for m in 4..=64 {
        let margin = PI / m as f64;
        let s0 = Sector::new(center - PI / 2.0 - margin, center + PI / 2.0 + margin, 1.0)?;
        let s1 = s0.rotated(PI);
        if is_good_sector(&s0, 1, fam.lambda()) && is_good_sector(&s1, 1, fam.lambda()) {
            return Ok((s0, s1));
        }
    }
    Err(LabError::NotGeneric)
}

/// Loop `ψ_i` at `t0`: segment to the circle of radius `|α₀-α₁|/4` around
/// `α_i`, once around it counterclockwise, and back.
pub fn monodromy_loop(fam: &ConfluentFamily, eps: f64, i: usize, t0: C64) -> Result<Path> {
    let (a0, a1) = fam.singularities(eps)?;
    let (ai, other) = match i {
        0 => (a0, a1),
        1 => (a1, a0),
        _ => return Err(LabError::InvalidArgument(format!("loop index {i}"))),
    };
    let d = a0 - a1;
    // distance of t0 from the line through the singularities
    let off = ((t0 - a1) * d.conj()).im.abs() / d.norm();
    if off <= 1e-12 * (1.0 + t0.norm()) {
        return Err(LabError::BasePointOnSingularLine);
    }
    let r = d.norm() / 4.0;
    let to = t0 - ai;
    if to.norm() <= r {
        return Err(LabError::InvalidArgument(
            "base point inside the loop circle".into(),
        ));
    }
    debug_assert!((other - ai).norm() > r);
    let start = ai + to * (r / to.norm());
    let circle = Path::circle_through(ai, start, true)?;
    Path::lasso(t0, &circle)
}

/// A loop homotopic to [`monodromy_loop`] that is cheap to integrate
/// accurately as `ε → 0`. The straight tail reaches the small circle where
/// `Re((λ_j-λ_k)/t)` is large, and errors picked up there get amplified by
/// `exp` of that size on the way back. This loop follows the arc `|t| = |t0|`
/// and then a radial segment to the point of the small circle where
/// `max |Re((λ_j-λ_k)/t)|` is smallest.
pub fn conditioned_monodromy_loop(
    fam: &ConfluentFamily,
    eps: f64,
    i: usize,
    t0: C64,
) -> Result<Path> {
    let straight = monodromy_loop(fam, eps, i, t0)?;
    let (a0, a1) = fam.singularities(eps)?;
    let (ai, other) = if i == 0 { (a0, a1) } else { (a1, a0) };
    let r = (a0 - a1).norm() / 4.0;
    let big = t0.norm();
    if big <= ai.norm() + 2.0 * r {
        return Ok(straight);
    }
    let lam = fam.lambda();
    let cost = |p: C64| {
        let mut c: f64 = 0.0;
        for j in 0..lam.len() {
            for k in j + 1..lam.len() {
                c = c.max(((lam[j] - lam[k]) / p).re.abs());
            }
        }
        c
    };
    // straight attachment point, for comparison and for the homotopy check
    let p_s = straight.segments()[0].end();
    let mut best: Option<(f64, C64)> = None;
    for m in 0..720 {
        let p = ai + C64::from_polar(r, TAU * m as f64 / 720.0);
        let outer = p * (big / p.norm());
        let Ok(radial) = Path::segment(outer, p) else {
            continue;
        };
        // the radial segment must meet the small circle first at p and keep
        // clear of the other singularity
        let (d_i, _) = radial.min_distance(&[ai]).unwrap_or((0.0, 0));
        let (d_o, _) = radial.min_distance(&[other]).unwrap_or((0.0, 0));
        if d_i < r * (1.0 - 1e-9) || d_o < 2.0 * r {
            continue;
        }
        let c = cost(p);
        if best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, p));
        }
    }
    let Some((c_best, p)) = best else {
        return Ok(straight);
    };
    if c_best >= cost(p_s) {
        return Ok(straight);
    }
    let outer = p * (big / p.norm());
    let th0 = t0.arg();
    let mut dth = (outer.arg() - th0).rem_euclid(TAU);
    if dth > PI {
        dth -= TAU;
    }
    let phi_s = (p_s - ai).arg();
    let phi = (p - ai).arg();
    for dir in [dth, if dth > 0.0 { dth - TAU } else { dth + TAU }] {
        let mut tail = Vec::new();
        if dir.abs() > 1e-12 {
            tail.push(PathSegment::arc(C64::new(0.0, 0.0), big, th0, th0 + dir)?);
        }
        tail.push(PathSegment::line(tail.last().map_or(t0, |s| s.end()), p)?);
        let tail = Path::new(tail)?;
        for small in [
            (phi - phi_s).rem_euclid(TAU),
            (phi - phi_s).rem_euclid(TAU) - TAU,
        ] {
            // straight tail, arc on the small circle, new tail reversed
            let mut closed = vec![PathSegment::line(t0, p_s)?];
            if small.abs() > 1e-12 {
                closed.push(PathSegment::arc(ai, r, phi_s, phi_s + small)?);
            }
            closed.extend(tail.reversed().segments().iter().cloned());
            let Ok(closed) = Path::new(closed) else {
                continue;
            };
            if closed.winding_number(a0).round() == 0.0 && closed.winding_number(a1).round() == 0.0
            {
                let circle = Path::circle_through(ai, p, true)?;
                return tail.then(&circle)?.then(&tail.reversed());
            }
        }
    }
    Ok(straight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn angles(rays: &[Ray]) -> Vec<f64> {
        rays.iter().map(|r| r.angle).collect()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    /// Brute-force scan for sign changes of `g(θ)`.
    fn scan_roots(g: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = 100_000;
        let mut out = Vec::new();
        for i in 0..n {
            let (a, b) = (TAU * i as f64 / n as f64, TAU * (i + 1) as f64 / n as f64);
            if g(a) == 0.0 || g(a).signum() != g(b).signum() {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if g(lo).signum() == g(mid).signum() && g(mid) != 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(lo);
            }
        }
        out
    }

    #[test]
    fn imaginary_rays_of_plus_minus_one() {
        let l = [c(1.0, 0.0), c(-1.0, 0.0)];
        let r = dividing_rays(1, &l, RayKind::ImaginaryDividing).unwrap();
        assert!(close(&angles(&r), &[PI / 2.0, 3.0 * PI / 2.0]));
        let r = dividing_rays(1, &l, RayKind::RealDividing).unwrap();
        assert!(close(&angles(&r), &[0.0, PI]));
    }

    #[test]
    fn rays_match_brute_force() {
        let l = [c(1.0, 0.0), c(0.0, 1.0)];
        let d = l[1] - l[0];
        let oracle = scan_roots(|th| (d * C64::from_polar(1.0, -th)).re);
        let r = dividing_rays(1, &l, RayKind::ImaginaryDividing).unwrap();
        assert!(
            close(&angles(&r), &oracle),
            "{:?} vs {:?}",
            angles(&r),
            oracle
        );
        assert!(close(&oracle, &[PI / 4.0, 5.0 * PI / 4.0]));
        let oracle = scan_roots(|th| (d * C64::from_polar(1.0, -th)).im);
        let r = dividing_rays(1, &l, RayKind::RealDividing).unwrap();
        assert!(close(&angles(&r), &oracle));
    }

    #[test]
    fn rays_interleave() {
        let l = [c(1.0, 0.3), c(-0.2, 1.0), c(0.5, -2.0)];
        for k in 1..=3 {
            let im = dividing_rays(k, &l, RayKind::ImaginaryDividing).unwrap();
            let re = dividing_rays(k, &l, RayKind::RealDividing).unwrap();
            for pair in [(0, 1), (0, 2), (1, 2)] {
                let a: Vec<f64> = im
                    .iter()
                    .filter(|r| r.pair == pair)
                    .map(|r| r.angle)
                    .collect();
                let b: Vec<f64> = re
                    .iter()
                    .filter(|r| r.pair == pair)
                    .map(|r| r.angle)
                    .collect();
                assert_eq!(a.len(), 2 * k as usize);
                for w in 0..a.len() {
                    let lo = a[w];
                    let hi = if w + 1 < a.len() {
                        a[w + 1]
                    } else {
                        a[0] + TAU
                    };
                    let n = b
                        .iter()
                        .filter(|&&x| (x > lo && x < hi) || (x + TAU > lo && x + TAU < hi))
                        .count();
                    assert_eq!(n, 1);
                }
            }
        }
    }

    #[test]
    fn good_sectors() {
        let l = [c(1.0, 0.0), c(-1.0, 0.0)];
        assert!(is_good_sector(
            &Sector::new(-PI / 4.0, 3.0 * PI / 4.0, 1.0).unwrap(),
            1,
            &l
        ));
        assert!(!is_good_sector(
            &Sector::new(0.0, PI / 4.0, 1.0).unwrap(),
            1,
            &l
        ));
        assert!(!is_good_sector(
            &Sector::new(-PI / 2.0 - 0.1, PI / 2.0 + 0.1, 1.0).unwrap(),
            1,
            &l
        ));
        // closure touching the second ray
        assert!(!is_good_sector(
            &Sector::new(-PI / 2.0, PI, 1.0).unwrap(),
            1,
            &l
        ));
    }

    #[test]
    fn genericity() {
        let e = ConfluentFamily::euler();
        assert!(is_generic(&e, &[0.5, 0.1], PI / 4.0));
        let mut r = e.clone();
        r.alpha_c = c(1.0, 0.0);
        assert!(!is_generic(&r, &[0.5], PI / 4.0));
        r.alpha_c = C64::from_polar(1.0, 0.01);
        assert!(!is_generic(&r, &[0.5], 0.1));
        assert!(matches!(associated_sectors(&r), Err(LabError::NotGeneric)));
    }

    #[test]
    fn euler_sectors() {
        let e = ConfluentFamily::euler();
        let (s0, s1) = associated_sectors(&e).unwrap();
        assert!((s0.theta1 + PI / 4.0).abs() < 1e-15);
        assert!((s0.theta2 - 5.0 * PI / 4.0).abs() < 1e-15);
        assert!((s1.theta1 - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!(is_good_sector(&s0, 1, e.lambda()) && is_good_sector(&s1, 1, e.lambda()));
        assert!(s0.contains(c(0.0, 0.1)));
        assert!(s1.contains(c(0.0, -0.1)));
        for i in 0..360 {
            let t = C64::from_polar(0.5, i as f64 * TAU / 360.0);
            assert!(s0.contains(t) || s1.contains(t));
        }
        let slit = SlitSector {
            base: s0,
            slit: (c(0.0, 0.1), c(0.0, -0.1)),
        };
        assert!(!slit.contains(c(0.0, 0.05)));
        assert!(slit.contains(c(0.0, 0.2)));
    }

    #[test]
    fn euler_loop_geometry() {
        let e = ConfluentFamily::euler();
        let p = monodromy_loop(&e, 0.5, 0, c(-0.5, 0.0)).unwrap();
        assert!(p.is_loop());
        assert!((p.basepoint() - c(-0.5, 0.0)).norm() < 1e-15);
        let seg = p.segments()[1];
        match seg {
            crate::integrator::PathSegment::Arc { center, radius, .. } => {
                assert_eq!(center, c(0.0, 0.5));
                assert!((radius - 0.25).abs() < 1e-15);
                assert!((center - c(0.0, -0.5)).norm() > radius);
            }
            _ => panic!("expected arc"),
        }
        assert_eq!(
            monodromy_loop(&e, 0.5, 0, c(0.0, 0.3)),
            Err(LabError::BasePointOnSingularLine)
        );
    }

    #[test]
    fn conditioned_loop_is_homotopic() {
        use crate::integrator::transfer_matrix;
        let fam = ConfluentFamily::t3();
        let t0 = c(-0.5, 0.0);
        for eps in [0.4, 0.2] {
            let (a0, a1) = fam.singularities(eps).unwrap();
            let field = fam.field(eps).unwrap();
            for i in 0..2 {
                let l = conditioned_monodromy_loop(&fam, eps, i, t0).unwrap();
                assert!(l.is_loop());
                assert!((l.basepoint() - t0).norm() < 1e-14);
                let (wi, wo) = if i == 0 { (a0, a1) } else { (a1, a0) };
                assert!((l.winding_number(wi) - 1.0).abs() < 1e-9);
                assert!(l.winding_number(wo).abs() < 1e-9);
                let s = monodromy_loop(&fam, eps, i, t0).unwrap();
                let ms = transfer_matrix(&field, &s, 1e-11).unwrap();
                let mc = transfer_matrix(&field, &l, 1e-11).unwrap();
                let d = ms.relative_distance(&mc);
                assert!(d < 1e-8, "eps {eps} i {i}: {d}");
            }
        }
    }

    #[test]
    fn winding_numbers() {
        let p = Path::circle_through(c(0.0, 0.0), c(1.0, 0.0), true).unwrap();
        assert!((p.winding_number(c(0.1, 0.2)) - 1.0).abs() < 1e-12);
        assert!(p.winding_number(c(3.0, 0.0)).abs() < 1e-12);
        let q = Path::circle_through(c(0.0, 0.0), c(1.0, 0.0), false).unwrap();
        assert!((q.winding_number(c(0.0, 0.0)) + 1.0).abs() < 1e-12);
    }
}
