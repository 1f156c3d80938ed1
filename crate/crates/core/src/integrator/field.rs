use crate::error::{LabError, Result};
use crate::{CMat, C64};

/// `B(t) = A(t) / f(t)` with `A` a matrix polynomial in `t` and
/// `f(t) = ∏ (t - s_k)` over the listed poles (repeats allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    /// `a_coeffs[p]` multiplies `t^p`.
    a_coeffs: Vec<CMat>,
    poles: Vec<C64>,
}

impl CoefficientField {
    pub fn new(a_coeffs: Vec<CMat>, poles: Vec<C64>) -> Result<Self> {
        let n = a_coeffs
            .first()
            .ok_or_else(|| LabError::InvalidArgument("empty coefficient list".into()))?
            .nrows();
        for m in &a_coeffs {
            if m.nrows() != n || m.ncols() != n {
                return Err(LabError::DimensionMismatch(
                    "coefficient matrices must all be n x n".into(),
                ));
            }
        }
        Ok(CoefficientField { a_coeffs, poles })
    }

    /// Constant field with no singularities.
    pub fn constant(b: CMat) -> Self {
        CoefficientField {
            a_coeffs: vec![b],
            poles: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a_coeffs[0].nrows()
    }

    pub fn coefficients(&self) -> &[CMat] {
        &self.a_coeffs
    }

    /// Poles with multiplicity.
    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    /// Distinct singular points.
    pub fn singularities(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for p in &self.poles {
            if !out.iter().any(|q| q == p) {
                out.push(*p);
            }
        }
        out
    }

    /// `A(t)` by Horner's rule.
    pub fn numerator(&self, t: C64) -> CMat {
        let n = self.dim();
        let mut acc = CMat::zeros(n, n);
        for m in self.a_coeffs.iter().rev() {
            acc = acc * t + m;
        }
        acc
    }

    pub fn denominator(&self, t: C64) -> C64 {
        self.poles
            .iter()
            .fold(C64::new(1.0, 0.0), |acc, p| acc * (t - p))
    }

    pub fn eval(&self, t: C64) -> Result<CMat> {
        let f = self.denominator(t);
        if f.norm() == 0.0 || !f.re.is_finite() || !f.im.is_finite() {
            return Err(LabError::SingularEvaluation(format!("B({t}) has a pole")));
        }
        Ok(self.numerator(t) / f)
    }

    /// `tr B(t)` without forming the matrix quotient.
    pub fn trace(&self, t: C64) -> Result<C64> {
        Ok(self.eval(t)?.trace())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};

    #[test]
    fn rejects_poles() {
        let f = CoefficientField::new(
            vec![diag(&[c(1.0, 0.0), c(-1.0, 0.0)])],
            vec![c(0.0, 0.5), c(0.0, -0.5)],
        )
        .unwrap();
        assert!(matches!(
            f.eval(c(0.0, 0.5)),
            Err(LabError::SingularEvaluation(_))
        ));
        let b = f.eval(c(0.0, 0.0)).unwrap();
        assert!((b[(0, 0)] - c(4.0, 0.0)).norm() < 1e-15);
        assert_eq!(f.singularities().len(), 2);
    }

    #[test]
    fn horner() {
        let one = CMat::identity(2, 2);
        let f =
            CoefficientField::new(vec![one.clone(), one.clone() * c(2.0, 0.0)], vec![]).unwrap();
        let b = f.eval(c(3.0, 0.0)).unwrap();
        assert!((b[(1, 1)] - c(7.0, 0.0)).norm() < 1e-15);
    }
}
