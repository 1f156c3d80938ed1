//! Projective dynamics of 2×2 monodromy: Möbius maps, fixed points, words in
//! `M₀^{±1}, M₁^{±1}` and their divergence as `ε → 0`.
//!
//! Maps are stored as `exp(log_norm) · core` with `det = 1` and a core of
//! max-norm one, so that products of operators of size `e^{π/ε}` neither
//! overflow nor lose the projective action.

use std::fmt;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::family::ConfluentFamily;
use crate::integrator::{transfer_matrix, Path, ScaledMatrix};
use crate::monodromy::{fractional_power, EigenData, SweepPoint};
use crate::stokes::StokesPair;
use crate::{CMat, C64};

/// Chordal tolerance for point coincidence.
pub const CHORDAL_TOL: f64 = 1e-6;
/// Default orbit bound of the typicality check.
pub const TYPICALITY_K: u32 = 8;

/// A point of the Riemann sphere as a unit vector `[z₁ : z₂]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    h: [C64; 2],
}

impl SpherePoint {
    pub fn from_homogeneous(z1: C64, z2: C64) -> Result<Self> {
        let n = z1.norm().hypot(z2.norm());
        if !(n > 0.0) || !n.is_finite() {
            return Err(LabError::InvalidArgument(
                "zero or non-finite homogeneous vector".into(),
            ));
        }
        Ok(SpherePoint {
            h: [z1.unscale(n), z2.unscale(n)],
        })
    }

    pub fn finite(z: C64) -> Self {
        // 1/|(z,1)| never vanishes for finite z
        Self::from_homogeneous(z, C64::new(1.0, 0.0)).unwrap_or(Self::infinity())
    }

    pub fn infinity() -> Self {
        SpherePoint {
            h: [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        }
    }

    /// Projection of the column `j` of a 2×2 matrix.
    pub fn of_column(m: &CMat, j: usize) -> Result<Self> {
        Self::from_homogeneous(m[(0, j)], m[(1, j)])
    }

    pub fn homogeneous(&self) -> [C64; 2] {
        self.h
    }

    pub fn is_infinity(&self) -> bool {
        self.h[1] == C64::new(0.0, 0.0)
    }

    /// Chart value `z₁/z₂`; infinite parts for the point at infinity.
    pub fn chart(&self) -> C64 {
        if self.is_infinity() {
            C64::new(f64::INFINITY, f64::INFINITY)
        } else {
            self.h[0] / self.h[1]
        }
    }

    /// Chordal distance, in `[0, 2]`.
    pub fn chordal(&self, other: &SpherePoint) -> f64 {
        2.0 * (self.h[0] * other.h[1] - self.h[1] * other.h[0]).norm()
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinity() {
            write!(f, "inf")
        } else {
            let z = self.chart();
            write!(f, "{:e}{:+e}i", z.re, z.im)
        }
    }
}

/// Projectivization of an invertible 2×2 operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusMap {
    core: Matrix2<C64>,
    log_norm: f64,
}

fn max_abs(m: &Matrix2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn adjugate(m: &Matrix2<C64>) -> Matrix2<C64> {
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// Eigenvector of a 2×2 matrix for `lambda`, from the better of the two
/// rows of `m - λ`.
fn eigvec(m: &Matrix2<C64>, lambda: C64) -> Option<SpherePoint> {
    let a = (m[(0, 1)], lambda - m[(0, 0)]);
    let b = (lambda - m[(1, 1)], m[(1, 0)]);
    let na = a.0.norm().hypot(a.1.norm());
    let nb = b.0.norm().hypot(b.1.norm());
    let (v, n) = if na >= nb { (a, na) } else { (b, nb) };
    if n <= 1e-13 * max_abs(m).max(lambda.norm()) {
        return None;
    }
    SpherePoint::from_homogeneous(v.0, v.1).ok()
}

impl MobiusMap {
    pub fn identity() -> Self {
        MobiusMap {
            core: Matrix2::identity(),
            log_norm: 0.0,
        }
    }

    /// From the represented matrix `exp(log_scale) core` and the log of its
    /// determinant. Passing the determinant separately matters when `core`
    /// is nearly rank one and its computed determinant is pure rounding.
    pub fn from_parts(core: &CMat, log_scale: C64, ln_det: C64) -> Result<Self> {
        if core.nrows() != 2 || core.ncols() != 2 {
            return Err(LabError::DimensionMismatch(format!(
                "projectivization needs 2x2, got {}x{}",
                core.nrows(),
                core.ncols()
            )));
        }
        if !ln_det.re.is_finite() || !ln_det.im.is_finite() {
            return Err(LabError::SingularMatrix("zero determinant".into()));
        }
        let l = log_scale - ln_det * 0.5;
        let phase = C64::new(0.0, l.im).exp();
        let c = Matrix2::new(core[(0, 0)], core[(0, 1)], core[(1, 0)], core[(1, 1)]) * phase;
        let n = max_abs(&c);
        if !(n > 0.0) || !n.is_finite() {
            return Err(LabError::SingularMatrix("zero or non-finite matrix".into()));
        }
        Ok(MobiusMap {
            core: c.unscale(n),
            log_norm: l.re + n.ln(),
        })
    }

    pub fn projectivize(m: &CMat) -> Result<Self> {
        let sm = ScaledMatrix::from_matrix(m.clone());
        let d = crate::linalg::det(sm.core());
        let size = crate::linalg::max_norm(sm.core());
        if d.norm() <= 1e-14 * size * size {
            return Err(LabError::SingularMatrix("projectivize".into()));
        }
        Self::from_scaled(&sm)
    }

    /// Uses the determinant of the scaled core; fine unless the core is
    /// numerically rank one.
    pub fn from_scaled(sm: &ScaledMatrix) -> Result<Self> {
        Self::from_parts(sm.core(), sm.log_scale(), sm.ln_det())
    }

    /// `M = V diag(λ) V⁻¹` with the exact log-eigenvalues.
    pub fn from_eigen(ed: &EigenData) -> Result<Self> {
        let m = fractional_power(ed, 1.0, None)?;
        let ln_det = ed.log_eigenvalues.iter().sum();
        Self::from_parts(m.core(), m.log_scale(), ln_det)
    }

    /// The normalized matrix; overflows for very large maps.
    pub fn matrix(&self) -> CMat {
        let s = self.log_norm.exp();
        CMat::from_fn(2, 2, |i, j| self.core[(i, j)] * s)
    }

    pub fn core(&self) -> Matrix2<C64> {
        self.core
    }

    /// `ln` of the max-norm of the determinant-one matrix.
    pub fn ln_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn norm(&self) -> f64 {
        self.log_norm.exp()
    }

    pub fn compose(&self, right: &MobiusMap) -> MobiusMap {
        let c = self.core * right.core;
        let n = max_abs(&c);
        if !(n > 0.0) {
            // total cancellation; keep the scale so the failure is visible
            return MobiusMap {
                core: c,
                log_norm: self.log_norm + right.log_norm,
            };
        }
        MobiusMap {
            core: c.unscale(n),
            log_norm: self.log_norm + right.log_norm + n.ln(),
        }
    }

    /// Exact: the adjugate of a determinant-one matrix.
    pub fn inverse(&self) -> MobiusMap {
        MobiusMap {
            core: adjugate(&self.core),
            log_norm: self.log_norm,
        }
    }

    pub fn pow(&self, k: i64) -> MobiusMap {
        let mut base = if k < 0 { self.inverse() } else { *self };
        let mut e = k.unsigned_abs();
        let mut acc = MobiusMap::identity();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        acc
    }

    /// `g ∘ self ∘ g⁻¹`.
    pub fn conjugate(&self, g: &MobiusMap) -> MobiusMap {
        g.compose(self).compose(&g.inverse())
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        let h = p.homogeneous();
        let z1 = self.core[(0, 0)] * h[0] + self.core[(0, 1)] * h[1];
        let z2 = self.core[(1, 0)] * h[0] + self.core[(1, 1)] * h[1];
        // det ≠ 0, so the image vector is non-zero up to rounding
        SpherePoint::from_homogeneous(z1, z2).unwrap_or(*p)
    }

    /// Eigenvalues of the determinant-one matrix as logs, dominant first.
    fn log_eigenvalues(&self) -> (C64, C64) {
        let det_core = C64::new((-2.0 * self.log_norm).exp(), 0.0);
        let (big, _) = crate::linalg::quadratic_roots(self.core.trace(), det_core);
        let la = big.ln() + self.log_norm;
        (la, -la)
    }

    /// `ln` of the multiplier at the attracting fixed point, `ln(λ_r/λ_a)`.
    pub fn ln_multiplier(&self) -> C64 {
        let (la, _) = self.log_eigenvalues();
        la * -2.0
    }

    pub fn classify(&self, tol: f64) -> Classification {
        match self.fixed_points(tol) {
            Ok(fp) => Classification::Hyperbolic(fp),
            Err(_) => Classification::NonHyperbolic,
        }
    }

    pub fn fixed_points(&self, tol: f64) -> Result<FixedPointData> {
        let ln_mult = self.ln_multiplier();
        let module = ln_mult.re.exp();
        if !ln_mult.re.is_finite() || (1.0 - module).abs() <= tol {
            return Err(LabError::NonHyperbolic);
        }
        let (la, _) = self.log_eigenvalues();
        let lam = (la - self.log_norm).exp();
        let attractor = eigvec(&self.core, lam).ok_or(LabError::NonHyperbolic)?;
        let repeller = eigvec(&adjugate(&self.core), lam).ok_or(LabError::NonHyperbolic)?;
        Ok(FixedPointData {
            attractor,
            repeller,
            multiplier: ln_mult.exp(),
            ln_multiplier: ln_mult,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointData {
    pub attractor: SpherePoint,
    pub repeller: SpherePoint,
    /// Derivative at the attractor, module `< 1`. Underflows to zero for
    /// strongly hyperbolic maps; see `ln_multiplier`.
    pub multiplier: C64,
    pub ln_multiplier: C64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    Hyperbolic(FixedPointData),
    NonHyperbolic,
}

impl Classification {
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Classification::Hyperbolic(_))
    }
}

// ---------------------------------------------------------------- words

/// `M_gen^{±1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter {
    pub generator: u8,
    pub inverse: bool,
}

impl Letter {
    pub fn new(generator: u8, inverse: bool) -> Self {
        Letter { generator, inverse }
    }

    pub fn inv(self) -> Letter {
        Letter::new(self.generator, !self.inverse)
    }

    pub fn from_char(c: char) -> Result<Letter> {
        match c {
            'a' => Ok(Letter::new(0, false)),
            'A' => Ok(Letter::new(0, true)),
            'b' => Ok(Letter::new(1, false)),
            'B' => Ok(Letter::new(1, true)),
            other => Err(LabError::InvalidLetter(other)),
        }
    }

    pub fn to_char(self) -> char {
        match (self.generator, self.inverse) {
            (0, false) => 'a',
            (0, true) => 'A',
            (_, false) => 'b',
            (_, true) => 'B',
        }
    }
}

const AB: [Letter; 2] = [
    Letter {
        generator: 0,
        inverse: false,
    },
    Letter {
        generator: 1,
        inverse: false,
    },
];
const BA_INV: [Letter; 2] = [
    Letter {
        generator: 1,
        inverse: true,
    },
    Letter {
        generator: 0,
        inverse: true,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    /// Everything cancelled.
    Identity,
    /// Not a complete power, and the leftmost pair is not `(M₀M₁)^{±1}`.
    Reduced,
    /// `(M₀M₁)^k`, `k ≠ 0`.
    CompletePower(i64),
    /// Not a complete power, but starts with `(M₀M₁)^{±1}`; see [`WordSpec::factor`].
    Reducible,
}

impl fmt::Display for WordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WordClass::Identity => write!(f, "identity"),
            WordClass::Reduced => write!(f, "reduced"),
            WordClass::CompletePower(k) => write!(f, "complete-power({k})"),
            WordClass::Reducible => write!(f, "reducible"),
        }
    }
}

/// A freely reduced word, written left to right; the rightmost letter acts
/// first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSpec {
    pub letters: Vec<Letter>,
    pub class: WordClass,
    /// Whether free cancellation removed anything.
    pub cancelled: bool,
}

fn free_reduce(letters: &[Letter]) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::with_capacity(letters.len());
    for &l in letters {
        if out.last() == Some(&l.inv()) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

fn classify_letters(letters: &[Letter]) -> WordClass {
    if letters.is_empty() {
        return WordClass::Identity;
    }
    if letters.len() % 2 == 0 {
        let k = (letters.len() / 2) as i64;
        if letters.chunks(2).all(|c| c == AB) {
            return WordClass::CompletePower(k);
        }
        if letters.chunks(2).all(|c| c == BA_INV) {
            return WordClass::CompletePower(-k);
        }
    }
    if letters.len() >= 2 && (letters[..2] == AB || letters[..2] == BA_INV) {
        WordClass::Reducible
    } else {
        WordClass::Reduced
    }
}

/// Expands `(generator, exponent)` factors, written left to right, into
/// letters, cancels and classifies.
pub fn normalize_word(raw: &[(usize, i64)]) -> Result<WordSpec> {
    let mut letters = Vec::new();
    for &(g, e) in raw {
        if g > 1 {
            return Err(LabError::InvalidArgument(format!("generator index {g}")));
        }
        let l = Letter::new(g as u8, e < 0);
        letters.extend(std::iter::repeat_n(l, e.unsigned_abs() as usize));
    }
    Ok(WordSpec::from_letters(&letters))
}

impl WordSpec {
    pub fn from_letters(letters: &[Letter]) -> WordSpec {
        let reduced = free_reduce(letters);
        WordSpec {
            cancelled: reduced.len() != letters.len(),
            class: classify_letters(&reduced),
            letters: reduced,
        }
    }

    /// Letters `a`, `A`, `b`, `B` for `M₀, M₀⁻¹, M₁, M₁⁻¹`.
    pub fn parse(s: &str) -> Result<WordSpec> {
        let letters = s
            .trim()
            .chars()
            .map(Letter::from_char)
            .collect::<Result<Vec<_>>>()?;
        Ok(WordSpec::from_letters(&letters))
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Not a complete power and not empty.
    pub fn is_reduced(&self) -> bool {
        matches!(self.class, WordClass::Reduced | WordClass::Reducible)
    }

    /// `(M₀M₁)^k · rest` with `rest` not starting with `(M₀M₁)^{±1}`.
    pub fn factor(&self) -> (i64, WordSpec) {
        let mut k = 0i64;
        let mut i = 0;
        while i + 2 <= self.letters.len() {
            if self.letters[i..i + 2] == AB && k >= 0 {
                k += 1;
            } else if self.letters[i..i + 2] == BA_INV && k <= 0 {
                k -= 1;
            } else {
                break;
            }
            i += 2;
        }
        (k, WordSpec::from_letters(&self.letters[i..]))
    }

    pub fn concat(&self, other: &WordSpec) -> WordSpec {
        let mut l = self.letters.clone();
        l.extend_from_slice(&other.letters);
        WordSpec::from_letters(&l)
    }

    pub fn inverse(&self) -> WordSpec {
        let l: Vec<Letter> = self.letters.iter().rev().map(|l| l.inv()).collect();
        WordSpec::from_letters(&l)
    }
}

impl fmt::Display for WordSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for l in &self.letters {
            write!(f, "{}", l.to_char())?;
        }
        Ok(())
    }
}

/// All freely reduced non-empty words of length at most `max_len`.
pub fn all_words(max_len: usize) -> Vec<WordSpec> {
    let alphabet: Vec<Letter> = "aAbB"
        .chars()
        .map(|c| Letter::from_char(c).unwrap())
        .collect();
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Letter>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for &l in &alphabet {
                if w.last() == Some(&l.inv()) {
                    continue;
                }
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().map(|w| WordSpec::from_letters(w)));
        layer = next;
    }
    out
}

fn letter_map(l: Letter, m0: &MobiusMap, m1: &MobiusMap) -> MobiusMap {
    let m = if l.generator == 0 { m0 } else { m1 };
    if l.inverse {
        m.inverse()
    } else {
        *m
    }
}

/// Ordered product, rightmost letter applied first.
pub fn evaluate_word(w: &WordSpec, m0: &MobiusMap, m1: &MobiusMap) -> MobiusMap {
    w.letters.iter().fold(MobiusMap::identity(), |acc, &l| {
        acc.compose(&letter_map(l, m0, m1))
    })
}

/// Splits a word into maps, replacing `ab` by `mc` and `BA` by `mc⁻¹`.
fn tokens(w: &WordSpec, m0: &MobiusMap, m1: &MobiusMap, mc: &MobiusMap) -> Vec<MobiusMap> {
    let mut out = Vec::with_capacity(w.len());
    let mut i = 0;
    while i < w.letters.len() {
        if i + 2 <= w.letters.len() && w.letters[i..i + 2] == AB {
            out.push(*mc);
            i += 2;
        } else if i + 2 <= w.letters.len() && w.letters[i..i + 2] == BA_INV {
            out.push(mc.inverse());
            i += 2;
        } else {
            out.push(letter_map(w.letters[i], m0, m1));
            i += 1;
        }
    }
    out
}

/// Like [`evaluate_word`], but with `M₀M₁` taken from a separately computed
/// complete monodromy. Multiplying `M₀` by `M₁` directly cancels entries of
/// size `e^{2π/ε}` down to a bounded result.
pub fn evaluate_word_with_complete(
    w: &WordSpec,
    m0: &MobiusMap,
    m1: &MobiusMap,
    mc: &MobiusMap,
) -> MobiusMap {
    tokens(w, m0, m1, mc)
        .iter()
        .fold(MobiusMap::identity(), |acc, m| acc.compose(m))
}

/// Applies a word to a point token by token, rightmost first.
pub fn apply_word(
    w: &WordSpec,
    m0: &MobiusMap,
    m1: &MobiusMap,
    mc: &MobiusMap,
    x: &SpherePoint,
) -> SpherePoint {
    tokens(w, m0, m1, mc)
        .iter()
        .rev()
        .fold(*x, |p, m| m.apply(&p))
}

// -------------------------------------------------- monodromy projectivized

/// Projectivized monodromy at one `ε`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectiveMonodromy {
    pub eps: f64,
    pub m0: MobiusMap,
    pub m1: MobiusMap,
    /// `M₀M₁` integrated along the complete loop.
    pub mc: MobiusMap,
}

impl ProjectiveMonodromy {
    pub fn from_sweep_point(p: &SweepPoint) -> Result<Self> {
        Ok(ProjectiveMonodromy {
            eps: p.eps,
            m0: MobiusMap::from_eigen(&p.ed0)?,
            m1: MobiusMap::from_eigen(&p.ed1)?,
            mc: MobiusMap::from_scaled(&p.pair.complete)?,
        })
    }

    pub fn letter(&self, l: Letter) -> MobiusMap {
        letter_map(l, &self.m0, &self.m1)
    }

    pub fn evaluate(&self, w: &WordSpec) -> MobiusMap {
        evaluate_word_with_complete(w, &self.m0, &self.m1, &self.mc)
    }

    pub fn apply(&self, w: &WordSpec, x: &SpherePoint) -> SpherePoint {
        apply_word(w, &self.m0, &self.m1, &self.mc, x)
    }
}

/// Projectivized monodromy of the limit equation around `|t| = |t0|`.
pub fn limit_complete_map(fam: &ConfluentFamily, t0: C64, tol: f64) -> Result<MobiusMap> {
    let field = fam.limit_field()?;
    let path = Path::circle_through(C64::new(0.0, 0.0), t0, true)?;
    MobiusMap::from_scaled(&transfer_matrix(&field, &path, tol)?)
}

/// `p_ij`: projections of the canonical solutions `f_ij` of the limit
/// equation at the base point (`i` = sector, `j` = column).
pub fn limit_points(stokes: &StokesPair) -> Result<[[SpherePoint; 2]; 2]> {
    Ok([
        [
            SpherePoint::of_column(&stokes.z0_left, 0)?,
            SpherePoint::of_column(&stokes.z0_left, 1)?,
        ],
        [
            SpherePoint::of_column(&stokes.z1_left, 0)?,
            SpherePoint::of_column(&stokes.z1_left, 1)?,
        ],
    ])
}

/// Fixed points at one `ε`, indexed like the eigenvalues: `p[0] = [p₀₁, p₀₂]`
/// (attractor, repeller of `m₀`), `p[1] = [p₁₁, p₁₂]` (repeller, attractor of
/// `m₁`).
#[derive(Debug, Clone, Copy)]
pub struct FixedPointRow {
    pub eps: f64,
    pub fp0: FixedPointData,
    pub fp1: FixedPointData,
    pub p: [[SpherePoint; 2]; 2],
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub rows: Vec<FixedPointRow>,
    /// Chordal step between the last two grid points, per `p_ij`.
    pub cauchy: [[f64; 2]; 2],
    /// Chordal distance `p₀₂` to `p₁₂` at the smallest `ε`.
    pub coincidence: f64,
}

impl FixedPointReport {
    pub fn last(&self) -> &FixedPointRow {
        &self.rows[self.rows.len() - 1]
    }

    /// Largest chordal distance between the smallest-`ε` points and `limit`.
    pub fn distance_to(&self, limit: &[[SpherePoint; 2]; 2]) -> f64 {
        let p = &self.last().p;
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max(p[i][j].chordal(&limit[i][j]));
            }
        }
        d
    }
}

pub fn fixed_point_geometry(maps: &[ProjectiveMonodromy], tol: f64) -> Result<FixedPointReport> {
    if maps.is_empty() {
        return Err(LabError::InvalidArgument("empty map sequence".into()));
    }
    let rows = maps
        .iter()
        .map(|m| {
            let fp0 = m.m0.fixed_points(tol)?;
            let fp1 = m.m1.fixed_points(tol)?;
            Ok(FixedPointRow {
                eps: m.eps,
                fp0,
                fp1,
                p: [[fp0.attractor, fp0.repeller], [fp1.repeller, fp1.attractor]],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cauchy = [[0.0; 2]; 2];
    if rows.len() >= 2 {
        let (a, b) = (&rows[rows.len() - 2].p, &rows[rows.len() - 1].p);
        for i in 0..2 {
            for j in 0..2 {
                cauchy[i][j] = a[i][j].chordal(&b[i][j]);
            }
        }
    }
    let last = &rows[rows.len() - 1].p;
    let coincidence = last[0][1].chordal(&last[1][1]);
    Ok(FixedPointReport {
        rows,
        cauchy,
        coincidence,
    })
}

/// `true` iff `m^k p_a` stays farther than `tol` from every other `p_b` for
/// `0 < |k| ≤ K`. A truncation of a countable condition: typical up to `K`.
pub fn typicality_check(m: &MobiusMap, points: &[SpherePoint], k_max: u32, tol: f64) -> bool {
    let mut fwd = *m;
    let back = m.inverse();
    let mut bwd = back;
    for _ in 0..k_max {
        for mk in [&fwd, &bwd] {
            for (a, pa) in points.iter().enumerate() {
                let img = mk.apply(pa);
                for (b, pb) in points.iter().enumerate() {
                    if a != b && img.chordal(pb) <= tol {
                        return false;
                    }
                }
            }
        }
        fwd = fwd.compose(m);
        bwd = bwd.compose(&back);
    }
    true
}

/// [`typicality_check`] without the relations `m(p₁₁) = p₀₁` and
/// `m⁻¹(p₀₁) = p₁₁`, which every equation satisfies: the solution recessive
/// on the second overlap of the two sectors is a canonical solution of both,
/// and going once around turns one branch into the other. Points are indexed
/// as `p[i][j]`.
pub fn essential_typicality_check(
    m: &MobiusMap,
    p: &[[SpherePoint; 2]; 2],
    k_max: u32,
    tol: f64,
) -> bool {
    let flat: Vec<(usize, SpherePoint)> = p.iter().flatten().copied().enumerate().collect();
    // flat indices: 0 = p₀₁, 1 = p₀₂, 2 = p₁₁, 3 = p₁₂
    let forced =
        |k: i64, a: usize, b: usize| (k == 1 && a == 2 && b == 0) || (k == -1 && a == 0 && b == 2);
    for k in 1..=k_max as i64 {
        for s in [k, -k] {
            let mk = m.pow(s);
            for &(a, pa) in &flat {
                let img = mk.apply(&pa);
                for &(b, pb) in &flat {
                    if a != b && !forced(s, a, b) && img.chordal(&pb) <= tol {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Images of `x` under a diverging family, compared with its attractors.
#[derive(Debug, Clone)]
pub struct PushReport {
    pub images: Vec<SpherePoint>,
    pub attractors: Vec<SpherePoint>,
    /// Image at the last parameter.
    pub limit: SpherePoint,
    /// Chordal distance of `limit` to the last attractor.
    pub distance: f64,
}

/// Pushes `x` through each map. Fails when `x` lies within `tol` of the last
/// repeller.
pub fn hyperbolic_push(maps: &[MobiusMap], x: &SpherePoint, tol: f64) -> Result<PushReport> {
    let last = maps
        .last()
        .ok_or_else(|| LabError::InvalidArgument("empty map family".into()))?;
    let fp_last = last.fixed_points(tol)?;
    if x.chordal(&fp_last.repeller) <= tol {
        return Err(LabError::SampleNearRepeller);
    }
    let mut images = Vec::with_capacity(maps.len());
    let mut attractors = Vec::with_capacity(maps.len());
    for m in maps {
        images.push(m.apply(x));
        attractors.push(m.fixed_points(tol)?.attractor);
    }
    let limit = images[images.len() - 1];
    Ok(PushReport {
        distance: limit.chordal(&fp_last.attractor),
        images,
        attractors,
        limit,
    })
}

/// Random sample points, roughly uniform on the sphere.
pub fn random_samples(count: usize, seed: u64) -> Vec<SpherePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            // gaussian-ish homogeneous coordinates give a rotation-invariant law
            let mut g = || {
                let (u, v): (f64, f64) = (rng.gen_range(1e-12..1.0), rng.gen());
                let r = (-2.0 * u.ln()).sqrt();
                C64::from_polar(r, std::f64::consts::TAU * v)
            };
            let (z1, z2) = (g(), g());
            SpherePoint::from_homogeneous(z1, z2).unwrap_or(SpherePoint::infinity())
        })
        .collect()
}

/// One word at one `ε`.
#[derive(Debug, Clone)]
pub struct DivergenceRow {
    pub word: String,
    pub class: WordClass,
    pub eps: f64,
    pub ln_norm: f64,
    /// Attractor of the leftmost letter after factoring out `(M₀M₁)^k`,
    /// pushed by `(M₀M₁)^k`. `None` for complete powers.
    pub predicted: Option<SpherePoint>,
    /// Image of the first admissible sample.
    pub observed: Option<SpherePoint>,
    pub matched: usize,
    pub tracked: usize,
}

impl DivergenceRow {
    pub fn matched_fraction(&self) -> f64 {
        if self.tracked == 0 {
            f64::NAN
        } else {
            self.matched as f64 / self.tracked as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    /// Samples dropped because some `m^s x` hit a limit point.
    pub excluded: usize,
}

impl DivergenceReport {
    pub fn rows_for(&self, word: &str) -> Vec<&DivergenceRow> {
        self.rows.iter().filter(|r| r.word == word).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "word,eps,ln_norm,norm,classification,predicted_re,predicted_im,observed_re,observed_im,matched_fraction\n",
        );
        let pt = |p: &Option<SpherePoint>| match p {
            Some(p) if p.is_infinity() => "inf,inf".to_string(),
            Some(p) => {
                let z = p.chart();
                format!("{:e},{:e}", z.re, z.im)
            }
            None => "nan,nan".to_string(),
        };
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{},{},{},{:e}\n",
                r.word,
                r.eps,
                r.ln_norm,
                r.ln_norm.exp(),
                r.class,
                pt(&r.predicted),
                pt(&r.observed),
                r.matched_fraction()
            ));
        }
        s
    }
}

/// Limit data that decides which samples are admissible.
#[derive(Debug, Clone, Copy)]
pub struct ExclusionData {
    /// Limit of `m₀m₁`.
    pub m: MobiusMap,
    pub points: [[SpherePoint; 2]; 2],
}

fn admissible(x: &SpherePoint, excl: &ExclusionData, n: usize, tol: f64) -> bool {
    for s in -(n as i64)..=(n as i64) {
        let img = excl.m.pow(s).apply(x);
        if excl.points.iter().flatten().any(|p| img.chordal(p) <= tol) {
            return false;
        }
    }
    true
}

/// Predicted limit of `w x` for admissible `x`.
pub fn predicted_attractor(
    w: &WordSpec,
    maps: &ProjectiveMonodromy,
    tol: f64,
) -> Result<Option<SpherePoint>> {
    if !w.is_reduced() {
        return Ok(None);
    }
    let (k, rest) = w.factor();
    let lead = maps.letter(rest.letters[0]);
    let a = lead.fixed_points(tol)?.attractor;
    Ok(Some(maps.mc.pow(k).apply(&a)))
}

/// Norms of every word along the grid, and sample images against the
/// predicted attractor limits.
pub fn divergence_experiment(
    maps: &[ProjectiveMonodromy],
    words: &[WordSpec],
    samples: &[SpherePoint],
    exclusion: Option<&ExclusionData>,
    tol: f64,
) -> Result<DivergenceReport> {
    let max_len = words.iter().map(|w| w.len()).max().unwrap_or(0);
    let admitted: Vec<SpherePoint> = samples
        .iter()
        .filter(|x| exclusion.is_none_or(|e| admissible(x, e, max_len, CHORDAL_TOL)))
        .copied()
        .collect();
    let excluded = samples.len() - admitted.len();
    let rows = words
        .par_iter()
        .map(|w| {
            maps.iter()
                .map(|pm| {
                    let m = pm.evaluate(w);
                    let predicted = predicted_attractor(w, pm, tol)?;
                    let mut matched = 0;
                    let mut observed = None;
                    for x in &admitted {
                        let y = pm.apply(w, x);
                        observed.get_or_insert(y);
                        if predicted.is_some_and(|p| p.chordal(&y) <= CHORDAL_TOL) {
                            matched += 1;
                        }
                    }
                    Ok(DivergenceRow {
                        word: w.to_string(),
                        class: w.class,
                        eps: pm.eps,
                        ln_norm: m.ln_norm(),
                        predicted,
                        observed,
                        matched,
                        tracked: if predicted.is_some() {
                            admitted.len()
                        } else {
                            0
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DivergenceReport {
        rows: rows.into_iter().flatten().collect(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};
    use proptest::prelude::*;

    fn map(a: C64, b: C64, cc: C64, d: C64) -> MobiusMap {
        MobiusMap::projectivize(&CMat::from_row_slice(2, 2, &[a, b, cc, d])).unwrap()
    }

    fn scaling(l: f64) -> MobiusMap {
        MobiusMap::projectivize(&diag(&[c(l, 0.0), c(1.0, 0.0)])).unwrap()
    }

    #[test]
    fn projectivize_examples() {
        let m = scaling(4.0);
        // three-point test of the chart action
        for z in [c(0.0, 0.0), c(1.0, 0.0), c(0.3, -2.0)] {
            let img = m.apply(&SpherePoint::finite(z));
            assert!((img.chart() - z * 4.0).norm() < 1e-14);
        }
        assert!(m.apply(&SpherePoint::infinity()).is_infinity());
        let fp = m.fixed_points(1e-9).unwrap();
        assert!(fp.attractor.is_infinity());
        assert!(fp.repeller.chart().norm() < 1e-15);
        assert!((fp.multiplier - c(0.25, 0.0)).norm() < 1e-14);
        let det = crate::linalg::det(&m.matrix());
        assert!((det - 1.0).norm() < 1e-14);

        let id = MobiusMap::projectivize(&CMat::identity(2, 2)).unwrap();
        assert_eq!(id, MobiusMap::identity());
        let par = map(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        let img = par.apply(&SpherePoint::finite(c(2.0, 1.0)));
        assert!((img.chart() - c(3.0, 1.0)).norm() < 1e-14);
        assert!(!par.classify(1e-9).is_hyperbolic());
        assert_eq!(
            MobiusMap::projectivize(&CMat::from_element(2, 2, c(1.0, 0.0))),
            Err(LabError::SingularMatrix("projectivize".into()))
        );
    }

    #[test]
    fn classify_examples() {
        let fp = scaling(2.0).fixed_points(1e-9).unwrap();
        assert!(fp.repeller.chart().norm() < 1e-15);
        assert!(fp.attractor.is_infinity());
        assert!((fp.multiplier - c(0.5, 0.0)).norm() < 1e-14);
        // elliptic
        let rot = MobiusMap::projectivize(&diag(&[c(0.0, 1.0), c(1.0, 0.0)])).unwrap();
        assert_eq!(rot.classify(1e-9), Classification::NonHyperbolic);
        // Euler M₀ at ε = 0.5: eigenvalues e^{±π/ε}
        let e = (std::f64::consts::PI / 0.5).exp();
        let fp = scaling(e * e).fixed_points(1e-9).unwrap();
        assert!((fp.multiplier.re / (-4.0 * std::f64::consts::PI).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_maps_keep_fixed_points() {
        // conjugated diag(e^300, e^-300), far beyond f64 range when squared
        let g = map(c(1.0, 0.0), c(0.5, 0.2), c(-0.3, 0.0), c(1.0, 0.0));
        let core = diag(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let d = MobiusMap::from_parts(&core, c(300.0, 0.0), c(0.0, 0.0)).unwrap();
        let m = d.conjugate(&g);
        let fp = m.fixed_points(1e-9).unwrap();
        let want_a = g.apply(&SpherePoint::infinity());
        let want_r = g.apply(&SpherePoint::finite(c(0.0, 0.0)));
        assert!(fp.attractor.chordal(&want_a) < 1e-12);
        assert!(fp.repeller.chordal(&want_r) < 1e-12);
        assert!((fp.ln_multiplier.re + 600.0).abs() < 1e-9);
        assert!((m.pow(3).ln_norm() - 3.0 * m.ln_norm()).abs() < 1.0);
        // m m⁻¹ cancels e^{600}; only a moderate map returns to the identity
        let small_core = diag(&[c(1.0, 0.0), c((-10f64).exp(), 0.0)]);
        let small = MobiusMap::from_parts(&small_core, c(5.0, 0.0), c(0.0, 0.0))
            .unwrap()
            .conjugate(&g);
        assert!(small.compose(&small.inverse()).ln_norm().abs() < 1e-9);
    }

    #[test]
    fn normalize_word_examples() {
        let w = normalize_word(&[(0, 1), (1, 1)]).unwrap();
        assert_eq!(w.class, WordClass::CompletePower(1));
        assert!(!w.is_reduced());
        let w = normalize_word(&[(1, 1), (0, 1)]).unwrap();
        assert_eq!(w.class, WordClass::Reduced);
        let w = normalize_word(&[(0, 1), (0, -1), (1, 1)]).unwrap();
        assert_eq!(w.to_string(), "b");
        assert!(w.cancelled);
        assert_eq!(w.class, WordClass::Reduced);
        let w = normalize_word(&[(0, 2), (0, -2)]).unwrap();
        assert_eq!(w.class, WordClass::Identity);
        assert_eq!(
            WordSpec::parse("BABA").unwrap().class,
            WordClass::CompletePower(-2)
        );
        assert_eq!(WordSpec::parse("abA").unwrap().class, WordClass::Reducible);
        assert_eq!(WordSpec::parse("x"), Err(LabError::InvalidLetter('x')));
        assert!(normalize_word(&[(2, 1)]).is_err());
    }

    #[test]
    fn evaluate_word_examples() {
        let m0 = scaling(3.0);
        let m1 = map(c(1.0, 0.0), c(2.0, 0.0), c(0.5, 0.0), c(2.0, 0.0));
        let e = WordSpec::parse("").unwrap();
        assert_eq!(evaluate_word(&e, &m0, &m1), MobiusMap::identity());
        let a = WordSpec::parse("a").unwrap();
        assert_eq!(evaluate_word(&a, &m0, &m1), m0);
        // `bA` = M₁ M₀⁻¹
        let w = evaluate_word(&WordSpec::parse("bA").unwrap(), &m0, &m1);
        let x = SpherePoint::finite(c(0.7, 0.1));
        let direct = m1.apply(&m0.inverse().apply(&x));
        assert!(w.apply(&x).chordal(&direct) < 1e-14);
        // Euler projectivizations are diagonal and inverse to each other
        let e0 = scaling((4.0 * std::f64::consts::PI).exp());
        let e1 = e0.inverse();
        let p = evaluate_word(&WordSpec::parse("ab").unwrap(), &e0, &e1);
        assert!(crate::linalg::max_diff(&p.matrix(), &CMat::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn factor_examples() {
        let w = WordSpec::parse("ababA").unwrap();
        let (k, rest) = w.factor();
        assert_eq!((k, rest.to_string().as_str()), (2, "A"));
        let w = WordSpec::parse("BAb").unwrap();
        assert_eq!(w.factor().0, -1);
        assert_eq!(w.factor().1.to_string(), "b");
    }

    #[test]
    fn all_words_counts() {
        let w = all_words(3);
        assert_eq!(w.len(), 4 + 12 + 36);
        assert!(w.iter().all(|w| !w.cancelled));
    }

    #[test]
    fn typicality_examples() {
        let m = scaling(2.0);
        let pts = [
            SpherePoint::finite(c(1.0, 0.0)),
            SpherePoint::finite(c(-1.0, 0.0)),
            SpherePoint::finite(c(0.0, 3.0)),
            SpherePoint::infinity(),
        ];
        assert!(typicality_check(&m, &pts, 10, CHORDAL_TOL));
        // planted p₀₁ = m(p₁₁)
        let planted = [
            SpherePoint::finite(c(2.0, 0.0)),
            SpherePoint::finite(c(-1.0, 0.0)),
            SpherePoint::finite(c(1.0, 0.0)),
            SpherePoint::infinity(),
        ];
        assert!(!typicality_check(&m, &planted, 1, CHORDAL_TOL));
        // Euler: coinciding fixed points
        let euler = [
            SpherePoint::infinity(),
            SpherePoint::finite(c(0.0, 0.0)),
            SpherePoint::infinity(),
            SpherePoint::finite(c(0.0, 0.0)),
        ];
        assert!(!typicality_check(
            &MobiusMap::identity(),
            &euler,
            TYPICALITY_K,
            CHORDAL_TOL
        ));
    }

    #[test]
    fn push_examples() {
        let fam: Vec<MobiusMap> = [1e2, 1e4, 1e8].iter().map(|&l| scaling(l)).collect();
        let r = hyperbolic_push(&fam, &SpherePoint::finite(c(1.0, 0.0)), 1e-9).unwrap();
        assert!(r.limit.chordal(&SpherePoint::infinity()) < 1e-7);
        assert!(r.distance < 1e-7);
        assert_eq!(
            hyperbolic_push(&fam, &SpherePoint::finite(c(0.0, 0.0)), 1e-9).unwrap_err(),
            LabError::SampleNearRepeller
        );
    }

    #[test]
    fn synthetic_fixed_points_recovered() {
        let g = map(c(1.0, 0.0), c(0.4, 0.0), c(0.2, -0.1), c(1.0, 0.0));
        let pm = |eps: f64| {
            let s = (1.0 / eps).exp();
            let m0 = scaling(s).conjugate(&g);
            let m1 = scaling(1.0 / s);
            ProjectiveMonodromy {
                eps,
                m0,
                m1,
                mc: m0.compose(&m1),
            }
        };
        let r = fixed_point_geometry(&[pm(0.4), pm(0.2)], 1e-9).unwrap();
        let p = &r.last().p;
        assert!(p[0][0].chordal(&g.apply(&SpherePoint::infinity())) < 1e-12);
        assert!(p[0][1].chordal(&g.apply(&SpherePoint::finite(c(0.0, 0.0)))) < 1e-12);
        assert!(p[1][1].chart().norm() < 1e-12);
        assert!(p[1][0].is_infinity());
        assert!(r.cauchy.iter().flatten().all(|d| *d < 1e-12));
    }

    fn arb_map() -> impl Strategy<Value = MobiusMap> {
        prop::array::uniform8(-2.0f64..2.0).prop_filter_map("singular", |v| {
            MobiusMap::projectivize(&CMat::from_row_slice(
                2,
                2,
                &[c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])],
            ))
            .ok()
            .filter(|m| m.ln_norm() < 4.0)
        })
    }

    fn arb_word() -> impl Strategy<Value = WordSpec> {
        prop::collection::vec(0usize..4, 0..10).prop_map(|v| {
            let l: Vec<Letter> = v
                .iter()
                .map(|&i| Letter::from_char(['a', 'A', 'b', 'B'][i]).unwrap())
                .collect();
            WordSpec::from_letters(&l)
        })
    }

    proptest! {
        #[test]
        fn word_homomorphism(m0 in arb_map(), m1 in arb_map(), w1 in arb_word(), w2 in arb_word()) {
            let lhs = evaluate_word(&w1.concat(&w2), &m0, &m1);
            let rhs = evaluate_word(&w1, &m0, &m1).compose(&evaluate_word(&w2, &m0, &m1));
            let x = SpherePoint::finite(c(0.3, 0.8));
            let scale = (m0.ln_norm() + m1.ln_norm()) * (w1.len() + w2.len()) as f64;
            prop_assert!(lhs.apply(&x).chordal(&rhs.apply(&x)) < 1e-12 * scale.exp().max(1.0));
        }

        #[test]
        fn factor_remultiplies(w in arb_word()) {
            let (k, rest) = w.factor();
            let power = if k >= 0 { "ab".repeat(k as usize) } else { "BA".repeat((-k) as usize) };
            let back = WordSpec::parse(&power).unwrap().concat(&rest);
            prop_assert_eq!(back.letters, w.letters.clone());
            prop_assert!(rest.len() < 2 || (rest.letters[..2] != AB && rest.letters[..2] != BA_INV));
            if w.is_reduced() {
                prop_assert!(!rest.is_empty());
            }
        }

        #[test]
        fn conjugation_equivariance(m in arb_map(), g in arb_map()) {
            if let Ok(fp) = m.fixed_points(1e-2) {
                let h = m.conjugate(&g);
                let fh = h.fixed_points(1e-3).unwrap();
                prop_assert!((fh.ln_multiplier - fp.ln_multiplier).norm() < 1e-9);
                prop_assert!(fh.attractor.chordal(&g.apply(&fp.attractor)) < 1e-9);
                prop_assert!(fh.repeller.chordal(&g.apply(&fp.repeller)) < 1e-9);
            }
        }

        #[test]
        fn determinant_is_one(m in arb_map(), k in -4i64..5) {
            let p = m.pow(k);
            let det = crate::linalg::det(&p.matrix());
            prop_assert!((det - 1.0).norm() < 1e-9 * p.norm().powi(2));
        }
    }
}
