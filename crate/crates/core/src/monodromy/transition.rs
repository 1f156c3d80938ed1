use super::eigen::{nearest_branch, EigenData};
use super::MonodromyPair;
use crate::error::{LabError, Result};
use crate::integrator::ScaledMatrix;
use crate::linalg;
use crate::xnum::{XComplex, XMatrix};
use crate::{CMat, C64};

/// `M^d` with the eigenlines of `M` and eigenvalues `exp(d log λ_j)`. With a
/// reference, logs are first moved to the branch nearest the reference.
pub fn fractional_power(
    ed: &EigenData,
    d: f64,
    branch_ref: Option<&EigenData>,
) -> Result<ScaledMatrix> {
    let logs: Vec<C64> = match branch_ref {
        Some(r) => ed
            .log_eigenvalues
            .iter()
            .zip(&r.log_eigenvalues)
            .map(|(l, p)| nearest_branch(*l, *p))
            .collect(),
        None => ed.log_eigenvalues.clone(),
    };
    let top = logs
        .iter()
        .map(|l| l.re * d)
        .fold(f64::NEG_INFINITY, f64::max);
    let top = C64::new(if top.is_finite() { top } else { 0.0 }, 0.0);
    let diag: Vec<C64> = logs.iter().map(|l| (l * d - top).exp()).collect();
    let v = &ed.eigenvectors;
    let core = v * linalg::diag(&diag) * linalg::inverse(v)?;
    Ok(ScaledMatrix::new(core, top))
}

/// `C` with `V₁ = V₀ C` and unit diagonal, stored with its inverse in
/// extended range so that exponentially small entries survive.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub c: XMatrix,
    pub c_inv: XMatrix,
    pub eps: f64,
    /// `V₀`, pivot-normalized, in which `C` is expressed.
    pub basis: CMat,
}

impl TransitionMatrix {
    /// Saturating ordinary copy of `C`.
    pub fn matrix(&self) -> CMat {
        self.c.to_cmat()
    }

    /// `C₁₂` for `n = 2`.
    pub fn upper_entry(&self) -> XComplex {
        self.c.get(0, 1)
    }
}

fn unit_diagonal(c: &mut XMatrix, c_inv: &mut XMatrix) -> Result<()> {
    let n = c.dim();
    for k in 0..n {
        let d = c.get(k, k);
        if d.is_zero() {
            return Err(LabError::SingularMatrix(
                "zero diagonal in transition matrix".into(),
            ));
        }
        // C ← C D, C⁻¹ ← D⁻¹ C⁻¹ with D = diag(1/C_kk)
        for j in 0..n {
            c.set(j, k, c.get(j, k) / d);
            c_inv.set(k, j, c_inv.get(k, j) * d);
        }
    }
    Ok(())
}

/// `C = V₀⁻¹ V₁` straight from the eigenvectors, normalized to unit diagonal.
/// Entries below about `1e-16` relative are noise; see [`transition_matrix`].
pub fn transition_matrix_direct(
    ed0: &EigenData,
    ed1: &EigenData,
    eps: f64,
) -> Result<TransitionMatrix> {
    let v0 = linalg::pivot_normalize(&ed0.eigenvectors);
    let v1 = &ed1.eigenvectors;
    let c = linalg::inverse(&v0)? * v1;
    let c_inv = linalg::inverse(v1)? * &v0;
    let mut c = XMatrix::from_cmat(&c);
    let mut c_inv = XMatrix::from_cmat(&c_inv);
    unit_diagonal(&mut c, &mut c_inv)?;
    Ok(TransitionMatrix {
        c,
        c_inv,
        eps,
        basis: v0,
    })
}

/// Transition matrix with entries above the diagonal recovered through the
/// complete monodromy: `V₀⁻¹ M_c V₁ = Λ₀ C Λ₁` and `V₁⁻¹ M_c⁻¹ V₀ = Λ₁⁻¹ C⁻¹ Λ₀⁻¹`.
/// Both left-hand sides are bounded as `ε → 0`, so the tiny upper entries of
/// `C` and `C⁻¹` keep full relative accuracy.
pub fn transition_matrix(
    pair: &MonodromyPair,
    ed0: &EigenData,
    ed1: &EigenData,
) -> Result<TransitionMatrix> {
    let n = ed0.dim();
    let v0 = linalg::pivot_normalize(&ed0.eigenvectors);
    let v1 = &ed1.eigenvectors;
    let v0_inv = linalg::inverse(&v0)?;
    let v1_inv = linalg::inverse(v1)?;
    let direct = &v0_inv * v1;
    let direct_inv = &v1_inv * &v0;
    let mc = &pair.complete;
    let mc_inv = mc.inverse()?;
    let p = &v0_inv * mc.core() * v1;
    let q = &v1_inv * mc_inv.core() * &v0;
    let sp = XComplex::exp(mc.log_scale());
    let sq = XComplex::exp(mc_inv.log_scale());
    let mut c = XMatrix::zeros(n);
    let mut c_inv = XMatrix::zeros(n);
    for j in 0..n {
        for k in 0..n {
            if j < k {
                let pjk = XComplex::from_c64(p[(j, k)]) * sp;
                c.set(j, k, pjk / (ed0.eigenvalue(j) * ed1.eigenvalue(k)));
                let qjk = XComplex::from_c64(q[(j, k)]) * sq;
                c_inv.set(j, k, qjk * ed1.eigenvalue(j) * ed0.eigenvalue(k));
            } else {
                c.set(j, k, XComplex::from_c64(direct[(j, k)]));
                c_inv.set(j, k, XComplex::from_c64(direct_inv[(j, k)]));
            }
        }
    }
    unit_diagonal(&mut c, &mut c_inv)?;
    Ok(TransitionMatrix {
        c,
        c_inv,
        eps: pair.eps,
        basis: v0,
    })
}

/// `C · (Λ̃₁⁻¹C⁻¹Λ̃₁) · (Λ̃₁⁻¹Λ̃₀ C Λ̃₀⁻¹Λ̃₁) · (Λ̃₀C⁻¹Λ̃₀⁻¹)`, which equals
/// `C Λ̃₁⁻¹ C⁻¹ Λ̃₀ C Λ̃₁ C⁻¹ Λ̃₀⁻¹`. Inside the cone every factor is bounded.
pub fn factored_commutator(
    c: &XMatrix,
    c_inv: &XMatrix,
    nu0: &[XComplex],
    nu1: &[XComplex],
) -> XMatrix {
    let g1 = c_inv.diag_conjugate(nu1);
    let ratio: Vec<XComplex> = nu1.iter().zip(nu0).map(|(a, b)| *a / *b).collect();
    let g3 = c.diag_conjugate(&ratio);
    let inv0: Vec<XComplex> = nu0.iter().map(|z| z.recip()).collect();
    let g4 = c_inv.diag_conjugate(&inv0);
    c.mul(&g1).mul(&g3).mul(&g4)
}

/// `M₁^{-d₁} M₀^{d₀} M₁^{d₁} M₀^{-d₀}`.
#[derive(Debug, Clone)]
pub struct Commutator {
    /// In the `M₀` eigenbasis.
    pub eigenbasis: CMat,
    /// On initial values at the base point.
    pub operator: CMat,
    pub det: C64,
    /// `d₀, d₁ > 0` and `d₀ + d₁ < 1`.
    pub in_cone: bool,
}

impl Commutator {
    pub fn scaled(&self) -> ScaledMatrix {
        ScaledMatrix::from_matrix(self.operator.clone())
    }

    pub fn distance_to(&self, target: &CMat) -> f64 {
        linalg::max_diff(&self.operator, target)
    }
}

pub fn commutator(
    ed0: &EigenData,
    ed1: &EigenData,
    tm: &TransitionMatrix,
    d0: f64,
    d1: f64,
) -> Result<Commutator> {
    if ed0.dim() != tm.c.dim() || ed1.dim() != tm.c.dim() {
        return Err(LabError::DimensionMismatch(
            "eigen data vs transition matrix".into(),
        ));
    }
    let nu0: Vec<XComplex> = ed0
        .log_eigenvalues
        .iter()
        .map(|l| XComplex::exp(l * d0))
        .collect();
    let nu1: Vec<XComplex> = ed1
        .log_eigenvalues
        .iter()
        .map(|l| XComplex::exp(l * d1))
        .collect();
    let k = factored_commutator(&tm.c, &tm.c_inv, &nu0, &nu1).to_cmat();
    if !linalg::is_finite(&k) {
        return Err(LabError::SingularMatrix("commutator overflowed".into()));
    }
    let operator = &tm.basis * &k * linalg::inverse(&tm.basis)?;
    Ok(Commutator {
        det: linalg::det(&k),
        eigenbasis: k,
        operator,
        in_cone: d0 > 0.0 && d1 > 0.0 && d0 + d1 < 1.0,
    })
}

/// `M₀^{-d₀} M₁^{d₁} M₀^{d₀} M₁^{-d₁}`, the ordering that tends to the right
/// Stokes operator at the opposite base point. In the `M₁` eigenbasis
/// `V₁ = V₀C` it is the factored form with `C⁻¹` in place of `C` and the
/// roles of the two eigenvalue sets exchanged; `eigenbasis` refers to `V₁`.
pub fn reverse_commutator(
    ed0: &EigenData,
    ed1: &EigenData,
    tm: &TransitionMatrix,
    d0: f64,
    d1: f64,
) -> Result<Commutator> {
    if ed0.dim() != tm.c.dim() || ed1.dim() != tm.c.dim() {
        return Err(LabError::DimensionMismatch(
            "eigen data vs transition matrix".into(),
        ));
    }
    let nu0: Vec<XComplex> = ed0
        .log_eigenvalues
        .iter()
        .map(|l| XComplex::exp(l * d0))
        .collect();
    let nu1: Vec<XComplex> = ed1
        .log_eigenvalues
        .iter()
        .map(|l| XComplex::exp(l * d1))
        .collect();
    let k = factored_commutator(&tm.c_inv, &tm.c, &nu1, &nu0).to_cmat();
    if !linalg::is_finite(&k) {
        return Err(LabError::SingularMatrix("commutator overflowed".into()));
    }
    let v1 = &tm.basis * tm.c.to_cmat();
    let operator = &v1 * &k * linalg::inverse(&v1)?;
    Ok(Commutator {
        det: linalg::det(&k),
        eigenbasis: k,
        operator,
        in_cone: d0 > 0.0 && d1 > 0.0 && d0 + d1 < 1.0,
    })
}
