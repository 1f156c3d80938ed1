//! Confluent families `f(t,ε) ż = A(t,ε) z` with `f = (t-α₀)(t-α₁)`,
//! `α₀ = cε = -α₁`, and the sector geometry around the merged point.

mod format;
mod geometry;

use std::collections::BTreeMap;

pub use geometry::{
    associated_sectors, conditioned_monodromy_loop, dividing_rays, is_generic, is_good_sector,
    monodromy_loop, Ray, RayKind, Sector, SlitSector, DEFAULT_DELTA,
};

use crate::error::{LabError, Result};
use crate::integrator::CoefficientField;
use crate::linalg;
use crate::{CMat, C64};

/// Matrix polynomial in `(t, ε)`: `Σ A_{pq} t^p ε^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    n: usize,
    terms: BTreeMap<(u32, u32), CMat>,
}

impl PolyMatrix {
    pub fn new(n: usize) -> Self {
        PolyMatrix {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `m · t^p ε^q` (accumulating into an existing term).
    pub fn add_term(&mut self, p: u32, q: u32, m: CMat) -> Result<()> {
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(LabError::DimensionMismatch(format!(
                "term t^{p} eps^{q} is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.n,
                self.n
            )));
        }
        let entry = self
            .terms
            .entry((p, q))
            .or_insert_with(|| CMat::zeros(self.n, self.n));
        *entry += m;
        Ok(())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &CMat)> {
        self.terms.iter()
    }

    pub fn t_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.0).max().unwrap_or(0)
    }

    /// Coefficients in `t` at fixed `ε`, lowest power first.
    pub fn t_coeffs(&self, eps: f64) -> Vec<CMat> {
        let deg = self.t_degree() as usize;
        let mut out = vec![CMat::zeros(self.n, self.n); deg + 1];
        for (&(p, q), m) in &self.terms {
            out[p as usize] += m * C64::from(eps.powi(q as i32));
        }
        out
    }

    pub fn eval(&self, t: C64, eps: f64) -> CMat {
        let mut acc = CMat::zeros(self.n, self.n);
        for m in self.t_coeffs(eps).iter().rev() {
            acc = acc * t + m;
        }
        acc
    }
}

/// A confluent family of rank-one equations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfluentFamily {
    a: PolyMatrix,
    alpha_c: C64,
    lambda: Vec<C64>,
}

impl ConfluentFamily {
    /// Validates: eigenvalues of `A(0,0)` distinct and equal to `lambda`
    /// (in some order); `c ≠ 0`.
    pub fn new(a: PolyMatrix, alpha_c: C64, lambda: Vec<C64>) -> Result<Self> {
        let n = a.dim();
        if lambda.len() != n {
            return Err(LabError::DimensionMismatch(format!(
                "{} eigenvalues for n = {n}",
                lambda.len()
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                if (lambda[i] - lambda[j]).norm() == 0.0 {
                    return Err(LabError::RepeatedEigenvalues);
                }
            }
        }
        if alpha_c.norm() == 0.0 {
            return Err(LabError::DegenerateRoots);
        }
        let a00 = a.eval(C64::new(0.0, 0.0), 0.0);
        let eig = linalg::eigenvalues(&a00)?;
        let scale = 1.0 + lambda.iter().fold(0.0f64, |m, l| m.max(l.norm()));
        for l in &lambda {
            let d = eig.iter().fold(f64::INFINITY, |m, e| m.min((e - l).norm()));
            if d > 1e-9 * scale {
                return Err(LabError::InvalidArgument(format!(
                    "lambda {l} is not an eigenvalue of A(0,0)"
                )));
            }
        }
        Ok(ConfluentFamily { a, alpha_c, lambda })
    }

    /// Like [`ConfluentFamily::new`] with `lambda` taken from `A(0,0)`.
    pub fn from_matrix(a: PolyMatrix, alpha_c: C64) -> Result<Self> {
        let a00 = a.eval(C64::new(0.0, 0.0), 0.0);
        let mut eig = linalg::eigenvalues(&a00)?;
        eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
        Self::new(a, alpha_c, eig)
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn matrix(&self) -> &PolyMatrix {
        &self.a
    }

    pub fn alpha_c(&self) -> C64 {
        self.alpha_c
    }

    pub fn lambda(&self) -> &[C64] {
        &self.lambda
    }

    /// Euler family: `A = diag(1,-1)`, `α = ±iε`.
    pub fn euler() -> Self {
        let mut a = PolyMatrix::new(2);
        a.add_term(
            0,
            0,
            linalg::diag(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]),
        )
        .expect("2x2");
        Self::new(
            a,
            C64::new(0.0, 1.0),
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        )
        .expect("valid builtin")
    }

    /// `A = diag(1,-1) + t (c E₂₁ + c' E₁₂)`, `α = ±iε`.
    pub fn off_diagonal(c: C64, c_prime: C64) -> Self {
        let mut a = PolyMatrix::new(2);
        a.add_term(
            0,
            0,
            linalg::diag(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]),
        )
        .expect("2x2");
        let mut e = CMat::zeros(2, 2);
        e[(1, 0)] = c;
        e[(0, 1)] = c_prime;
        a.add_term(1, 0, e).expect("2x2");
        Self::new(
            a,
            C64::new(0.0, 1.0),
            vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
        )
        .expect("valid builtin")
    }

    /// Triangular test family `diag(1,-1) + c t E₂₁`.
    pub fn t2(c: f64) -> Self {
        Self::off_diagonal(C64::new(c, 0.0), C64::new(0.0, 0.0))
    }

    /// Test family `diag(1,-1) + t (0.3 E₂₁ + (0.3+0.1i) E₁₂)`. The imaginary
    /// part matters: with a real symmetric coupling the limit monodromy is
    /// elliptic of order five and the equation is far from typical.
    pub fn t3() -> Self {
        Self::off_diagonal(C64::new(0.3, 0.0), C64::new(0.3, 0.1))
    }

    /// `(α₀, α₁)` with `Im α₀ > 0 > Im α₁`.
    pub fn singularities(&self, eps: f64) -> Result<(C64, C64)> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "eps must be positive, got {eps}"
            )));
        }
        let r = self.alpha_c * eps;
        if r.norm() == 0.0 {
            return Err(LabError::DegenerateRoots);
        }
        if r.im == 0.0 {
            return Err(LabError::LabelUndefined);
        }
        if r.im > 0.0 {
            Ok((r, -r))
        } else {
            Ok((-r, r))
        }
    }

    /// `B(t) = A(t,ε)/f(t,ε)` for the integrator.
    pub fn field(&self, eps: f64) -> Result<CoefficientField> {
        let (a0, a1) = self.singularities(eps)?;
        CoefficientField::new(self.a.t_coeffs(eps), vec![a0, a1])
    }

    /// The limiting irregular field `A(t,0)/t²`.
    pub fn limit_field(&self) -> Result<CoefficientField> {
        CoefficientField::new(self.a.t_coeffs(0.0), vec![C64::new(0.0, 0.0); 2])
    }

    /// `A(t,0)` coefficients in `t`.
    pub fn limit_coeffs(&self) -> Vec<CMat> {
        self.a.t_coeffs(0.0)
    }

    pub fn parse(text: &str) -> Result<Self> {
        format::parse(text)
    }

    pub fn to_text(&self) -> String {
        format::serialize(self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use std::f64::consts::PI;

    #[test]
    fn euler_singularities() {
        let (a0, a1) = ConfluentFamily::euler().singularities(0.5).unwrap();
        assert_eq!(a0, c(0.0, 0.5));
        assert_eq!(a1, c(0.0, -0.5));
        assert_eq!(a0 + a1, c(0.0, 0.0));
    }

    #[test]
    fn rotated_labels() {
        let mut f = ConfluentFamily::euler();
        f.alpha_c = C64::from_polar(1.0, PI / 3.0);
        let (a0, a1) = f.singularities(1.0).unwrap();
        assert!((a0 - C64::from_polar(1.0, PI / 3.0)).norm() < 1e-15);
        assert!((a1 + C64::from_polar(1.0, PI / 3.0)).norm() < 1e-15);
        f.alpha_c = C64::from_polar(1.0, PI / 3.0 + PI);
        let (b0, _) = f.singularities(1.0).unwrap();
        assert!(b0.im > 0.0);
    }

    #[test]
    fn real_roots_unlabelled() {
        let mut f = ConfluentFamily::euler();
        f.alpha_c = c(1.0, 0.0);
        assert_eq!(f.singularities(0.1), Err(LabError::LabelUndefined));
        f.alpha_c = c(0.0, 0.0);
        assert_eq!(f.singularities(0.1), Err(LabError::DegenerateRoots));
    }

    #[test]
    fn repeated_eigenvalues_rejected() {
        let mut a = PolyMatrix::new(2);
        a.add_term(0, 0, CMat::identity(2, 2)).unwrap();
        assert_eq!(
            ConfluentFamily::from_matrix(a, c(0.0, 1.0)),
            Err(LabError::RepeatedEigenvalues)
        );
    }

    #[test]
    fn poly_eval() {
        let f = ConfluentFamily::t3();
        let m = f.matrix().eval(c(2.0, 0.0), 0.1);
        assert!((m[(0, 1)] - c(0.6, 0.2)).norm() < 1e-15);
        assert!((m[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-15);
    }
}
