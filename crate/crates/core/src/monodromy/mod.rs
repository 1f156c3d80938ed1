//! Monodromy of the perturbed equation at a base point: operators, labelled
//! eigen-structure, fractional powers, transition matrices and commutators.

mod eigen;
mod sweep;
mod synthetic;
mod transition;

pub use eigen::{
    eigen_index, label_order, log_projective_multiplier, module_order, principal_log,
    projective_multiplier, residue_log_eigenvalues, EigenData, GAP_MIN,
};
pub use sweep::{
    asymptotics_report, sweep, transition_distance, AsymptoticsReport, AsymptoticsRow,
    OracleTarget, SweepPoint,
};
pub use synthetic::{conjugation_residual, SyntheticFamily};
pub use transition::{
    commutator, factored_commutator, fractional_power, reverse_commutator, transition_matrix,
    transition_matrix_direct, Commutator, TransitionMatrix,
};

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::family::{conditioned_monodromy_loop, is_generic, ConfluentFamily, DEFAULT_DELTA};
use crate::integrator::{transfer, Path, ScaledMatrix, TransferOptions};
use crate::C64;

/// Base point used when none is given.
pub const DEFAULT_T0: C64 = C64::new(-0.5, 0.0);

/// Monodromy operators `M₀, M₁` along the loops `ψ₀, ψ₁` at `t0`, their
/// inverses (integrated along reversed loops) and the complete monodromy
/// around `|t| = |t0|`.
#[derive(Debug, Clone)]
pub struct MonodromyPair {
    pub eps: f64,
    pub t0: C64,
    pub m0: ScaledMatrix,
    pub m1: ScaledMatrix,
    pub m0_inv: ScaledMatrix,
    pub m1_inv: ScaledMatrix,
    pub complete: ScaledMatrix,
    /// Largest half-step discrepancy over the five transports.
    pub self_check: f64,
    pub steps: usize,
}

impl MonodromyPair {
    /// Relative distance between `M₀M₁` and the integrated complete
    /// monodromy. Only meaningful while the operators are moderate: the
    /// product cancels `exp(2π/ε)`-sized entries.
    pub fn product_residual(&self) -> Result<f64> {
        Ok(self.m0.compose(&self.m1)?.relative_distance(&self.complete))
    }

    pub fn operator(&self, i: usize) -> &ScaledMatrix {
        if i == 0 {
            &self.m0
        } else {
            &self.m1
        }
    }

    pub fn inverse_operator(&self, i: usize) -> &ScaledMatrix {
        if i == 0 {
            &self.m0_inv
        } else {
            &self.m1_inv
        }
    }
}

/// Counterclockwise loop at `t0` around both singularities: the circle
/// `|t| = |t0|` when it clears them, otherwise a lasso to a larger circle.
pub fn complete_loop(fam: &ConfluentFamily, eps: f64, t0: C64) -> Result<Path> {
    let (a0, a1) = fam.singularities(eps)?;
    let outer = a0.norm().max(a1.norm());
    let margin = (a0 - a1).norm() / 8.0;
    let origin = C64::new(0.0, 0.0);
    if t0.norm() >= outer + margin {
        return Path::circle_through(origin, t0, true);
    }
    if t0.norm() == 0.0 {
        return Err(LabError::InvalidArgument("base point at the origin".into()));
    }
    let r = outer + 2.0 * margin;
    let start = t0 * (r / t0.norm());
    let radial = Path::segment(t0, start)?;
    if radial
        .min_distance(&[a0, a1])
        .is_some_and(|(d, _)| d < margin)
    {
        return Err(LabError::InvalidArgument(
            "base point too close to a singularity".into(),
        ));
    }
    Path::lasso(t0, &Path::circle_through(origin, start, true)?)
}

pub fn monodromy_operators(
    fam: &ConfluentFamily,
    eps: f64,
    t0: C64,
    tol: f64,
) -> Result<MonodromyPair> {
    if !is_generic(fam, &[eps], DEFAULT_DELTA) {
        return Err(LabError::NotGeneric);
    }
    let (a0, a1) = fam.singularities(eps)?;
    let field = fam.field(eps)?;
    // homotopic to the straight lassos, but without exponential dichotomy
    // along the tails
    let l0 = conditioned_monodromy_loop(fam, eps, 0, t0)?;
    let l1 = conditioned_monodromy_loop(fam, eps, 1, t0)?;
    let circle = complete_loop(fam, eps, t0)?;
    let paths = [l0.clone(), l0.reversed(), l1.clone(), l1.reversed(), circle];
    let opts = TransferOptions {
        tol,
        // loops stay |α₀-α₁|/4 away; the outer circle may come closer at large ε
        d_min: Some((a0 - a1).norm() / 16.0),
        self_check: true,
        ..Default::default()
    };
    let mut reports = paths
        .par_iter()
        .map(|p| transfer(&field, p, &opts))
        .collect::<Result<Vec<_>>>()?;
    let self_check = reports
        .iter()
        .filter_map(|r| r.self_check_error)
        .fold(0.0f64, f64::max);
    let steps = reports.iter().map(|r| r.accepted + r.rejected).sum();
    let mut take = |i: usize| std::mem::replace(&mut reports[i].matrix, ScaledMatrix::identity(1));
    Ok(MonodromyPair {
        eps,
        t0,
        m0: take(0),
        m0_inv: take(1),
        m1: take(2),
        m1_inv: take(3),
        complete: take(4),
        self_check,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::transfer_matrix;
    use crate::linalg::{self, c};

    #[test]
    fn euler_operators_are_diagonal() {
        let fam = ConfluentFamily::euler();
        let p = monodromy_operators(&fam, 0.5, DEFAULT_T0, 1e-10).unwrap();
        let m0 = p.m0.to_matrix();
        let m1 = p.m1.to_matrix();
        let e = (2.0 * std::f64::consts::PI).exp();
        assert!((m0[(0, 0)] / e - 1.0).norm() < 1e-8);
        assert!((m1[(1, 1)] / e - 1.0).norm() < 1e-8);
        assert!(m0[(0, 1)].norm() < 1e-6 && m0[(1, 0)].norm() < 1e-6);
        assert!(p.self_check < 1e-8);
    }

    #[test]
    fn product_matches_complete_monodromy() {
        let fam = ConfluentFamily::t3();
        let p = monodromy_operators(&fam, 0.4, DEFAULT_T0, 1e-11).unwrap();
        let r = p.product_residual().unwrap();
        assert!(r < 1e-9, "{r}");
        // reversing the circle inverts it
        let field = fam.field(0.4).unwrap();
        let back = complete_loop(&fam, 0.4, DEFAULT_T0).unwrap().reversed();
        let opts = TransferOptions {
            tol: 1e-11,
            d_min: Some(0.01),
            ..Default::default()
        };
        let inv = transfer(&field, &back, &opts).unwrap().matrix;
        let id = p.complete.compose(&inv).unwrap();
        assert!(linalg::max_diff(&id.to_matrix(), &linalg::identity(2)) < 1e-8);
    }

    #[test]
    fn change_of_base_point_conjugates() {
        let fam = ConfluentFamily::t3();
        let eps = 0.3;
        let t1 = c(-0.5, 0.3);
        let a = monodromy_operators(&fam, eps, DEFAULT_T0, 1e-11).unwrap();
        let b = monodromy_operators(&fam, eps, t1, 1e-11).unwrap();
        // the segment from t0 to t1 stays left of both singularities
        let field = fam.field(eps).unwrap();
        let g = transfer_matrix(&field, &Path::segment(DEFAULT_T0, t1).unwrap(), 1e-11).unwrap();
        let lhs = b.m0.compose(&g).unwrap();
        let rhs = g.compose(&a.m0).unwrap();
        assert!(lhs.relative_distance(&rhs) < 1e-8);
    }

    #[test]
    fn base_point_on_singular_line() {
        let fam = ConfluentFamily::t3();
        assert_eq!(
            monodromy_operators(&fam, 0.2, c(0.0, 0.8), 1e-8).unwrap_err(),
            LabError::BasePointOnSingularLine
        );
    }
}
