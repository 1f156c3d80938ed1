use std::f64::consts::{PI, TAU};

use super::MonodromyPair;
use crate::error::{LabError, Result};
use crate::family::ConfluentFamily;
use crate::integrator::ScaledMatrix;
use crate::linalg;
use crate::xnum::XComplex;
use crate::{CMat, C64};
use nalgebra::DVector;

/// Smallest admissible relative gap between eigenvalue modules.
pub const GAP_MIN: f64 = 1e-3;

/// Log with imaginary part in `(-π, π]`.
pub fn principal_log(z: C64) -> C64 {
    let w = z.im.rem_euclid(TAU);
    C64::new(z.re, if w > PI { w - TAU } else { w })
}

/// `e^z - 1` without cancellation for small `z`.
fn exp_m1(z: C64) -> C64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    C64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

/// Shifts `z` by a multiple of `2πi` to land closest to `reference`.
pub(crate) fn nearest_branch(z: C64, reference: C64) -> C64 {
    let k = ((reference.im - z.im) / TAU).round();
    C64::new(z.re, z.im + k * TAU)
}

/// Indices into `fam.lambda()` ordered by increasing `Re(λ/(iα₀))`.
pub fn label_order(fam: &ConfluentFamily) -> Result<Vec<usize>> {
    let (a0, _) = fam.singularities(1.0)?;
    let dir = C64::new(0.0, 1.0) * a0;
    let lam = fam.lambda();
    let key: Vec<f64> = lam.iter().map(|l| (l / dir).re).collect();
    let mut idx: Vec<usize> = (0..lam.len()).collect();
    idx.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
    let scale = key.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if idx
        .windows(2)
        .any(|w| key[w[1]] - key[w[0]] <= 1e-12 * scale)
    {
        return Err(LabError::OrderingTie);
    }
    Ok(idx)
}

/// `log λ_{ij} = 2πi·eig(A(α_i, ε))/(α_i - α_{1-i})`, labelled by
/// [`label_order`]; each eigenvalue of `A(α_i)` is matched to the nearest
/// limit eigenvalue. Logs are the raw residue values (no branch shift).
pub fn residue_log_eigenvalues(fam: &ConfluentFamily, eps: f64) -> Result<[Vec<C64>; 2]> {
    let (a0, a1) = fam.singularities(eps)?;
    let order = label_order(fam)?;
    let lam = fam.lambda();
    let mut out: [Vec<C64>; 2] = [Vec::new(), Vec::new()];
    for (i, (ai, aj)) in [(a0, a1), (a1, a0)].into_iter().enumerate() {
        let e = linalg::eigenvalues(&fam.matrix().eval(ai, eps))?;
        let targets: Vec<C64> = order.iter().map(|&k| lam[k]).collect();
        let assign = match_nearest(&targets, &e)?;
        out[i] = assign
            .iter()
            .map(|&k| C64::new(0.0, TAU) * e[k] / (ai - aj))
            .collect();
    }
    Ok(out)
}

/// Greedy nearest matching `targets[j] -> values[assign[j]]` by increasing
/// distance; fails when the matching is ambiguous.
fn match_nearest(targets: &[C64], values: &[C64]) -> Result<Vec<usize>> {
    let n = targets.len();
    let mut pairs = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            pairs.push(((targets[j] - values[k]).norm(), j, k));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut assign = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, j, k) in pairs {
        if assign[j] == usize::MAX && !used[k] {
            assign[j] = k;
            used[k] = true;
        }
    }
    // the match must be closer than half the limit separation
    let sep = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| (targets[a] - targets[b]).norm())
        .fold(f64::INFINITY, f64::min);
    for j in 0..n {
        if (targets[j] - values[assign[j]]).norm() >= 0.5 * sep {
            return Err(LabError::RepeatedEigenvalues);
        }
    }
    Ok(assign)
}

/// Permutation ordering log-eigenvalues by module (decreasing when asked),
/// failing when two modules are within the relative gap.
pub fn module_order(logs: &[C64], decreasing: bool, gap_min: f64) -> Result<Vec<usize>> {
    let mut idx: Vec<usize> = (0..logs.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = logs[a].re.total_cmp(&logs[b].re);
        if decreasing {
            o.reverse()
        } else {
            o
        }
    });
    for w in idx.windows(2) {
        let d = (logs[w[0]].re - logs[w[1]].re).abs();
        let gap = -(-d).exp_m1();
        if gap < gap_min {
            return Err(LabError::EigenvalueCollision(gap));
        }
    }
    Ok(idx)
}

/// Labelled eigen-structure of one monodromy operator.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    /// `log λ_j` on the tracked branch.
    pub log_eigenvalues: Vec<C64>,
    /// The same eigenvalues recovered from the integrated operator.
    pub numeric_log_eigenvalues: Vec<C64>,
    /// Column `j` spans the eigenline of `λ_j`, max-norm one.
    pub eigenvectors: CMat,
    /// `index_assignment[j]` indexes the limit eigenvalue in the family.
    pub index_assignment: Vec<usize>,
}

impl EigenData {
    /// Eigen-structure of an ordinary matrix, labelled by decreasing module.
    pub fn from_operator(m: &CMat) -> Result<Self> {
        let eig = linalg::eigenvalues(m)?;
        if eig.iter().any(|z| z.norm() == 0.0) {
            return Err(LabError::SingularMatrix("zero eigenvalue".into()));
        }
        let logs: Vec<C64> = eig.iter().map(|z| z.ln()).collect();
        let order = module_order(&logs, true, GAP_MIN)?;
        let n = m.nrows();
        let mut v = CMat::zeros(n, n);
        for (j, &k) in order.iter().enumerate() {
            v.set_column(j, &linalg::eigenvector(m, eig[k])?);
        }
        let logs: Vec<C64> = order.iter().map(|&k| logs[k]).collect();
        Ok(EigenData {
            numeric_log_eigenvalues: logs.clone(),
            log_eigenvalues: logs,
            eigenvectors: v,
            index_assignment: order,
        })
    }

    pub fn dim(&self) -> usize {
        self.log_eigenvalues.len()
    }

    pub fn eigenvalue(&self, j: usize) -> XComplex {
        XComplex::exp(self.log_eigenvalues[j])
    }

    /// Largest `|λ_numeric/λ - 1|`.
    pub fn numeric_discrepancy(&self) -> f64 {
        self.log_eigenvalues
            .iter()
            .zip(&self.numeric_log_eigenvalues)
            .map(|(a, b)| exp_m1(b - a).norm())
            .fold(0.0, f64::max)
    }

    /// `‖V Λ V⁻¹ - M‖ / ‖M‖`, evaluated on the scaled core.
    pub fn reconstruction_residual(&self, m: &ScaledMatrix) -> Result<f64> {
        let s = m.log_scale();
        let d: Vec<C64> = self.log_eigenvalues.iter().map(|l| (l - s).exp()).collect();
        let v = &self.eigenvectors;
        let rec = v * linalg::diag(&d) * linalg::inverse(v)?;
        Ok(linalg::max_diff(&rec, m.core()) / linalg::max_norm(m.core()))
    }

    /// Moves every log onto the branch closest to `reference`.
    pub fn align_to(&mut self, reference: &[C64]) {
        for (l, r) in self.log_eigenvalues.iter_mut().zip(reference) {
            *l = nearest_branch(*l, *r);
        }
        for (l, r) in self
            .numeric_log_eigenvalues
            .iter_mut()
            .zip(&self.log_eigenvalues)
        {
            *l = nearest_branch(*l, *r);
        }
    }
}

/// Eigenvalue of `op` (or of `inv`, when that one makes it dominant) closest
/// to `exp(target)`, with its eigenvector.
fn numeric_pair(
    op: &ScaledMatrix,
    inv: &ScaledMatrix,
    logs: &[C64],
    j: usize,
) -> Result<(C64, DVector<C64>)> {
    let top = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let bottom = logs.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let direct = logs[j].re - top >= bottom - logs[j].re;
    let (m, sign) = if direct { (op, 1.0) } else { (inv, -1.0) };
    let target = logs[j] * sign - m.log_scale();
    let eig = linalg::eigenvalues(m.core())?;
    let goal = target.exp();
    let best = eig
        .iter()
        .copied()
        .min_by(|a, b| (a - goal).norm().total_cmp(&(b - goal).norm()))
        .ok_or_else(|| LabError::SingularMatrix("empty spectrum".into()))?;
    let v = linalg::eigenvector(m.core(), best)?;
    let log = (m.log_scale() + best.ln()) * sign;
    Ok((nearest_branch(log, logs[j]), v))
}

/// Labels the eigenvalues of `M₀` and `M₁` by the limit eigenvalues; logs
/// are principal. Modules must decrease in the label for `M₀` and increase
/// for `M₁`, each with relative gap at least [`GAP_MIN`].
pub fn eigen_index(pair: &MonodromyPair, fam: &ConfluentFamily) -> Result<(EigenData, EigenData)> {
    let raw = residue_log_eigenvalues(fam, pair.eps)?;
    let order = label_order(fam)?;
    let build = |i: usize| -> Result<EigenData> {
        let logs: Vec<C64> = raw[i].iter().map(|&l| principal_log(l)).collect();
        let perm = module_order(&logs, i == 0, GAP_MIN)?;
        if perm.iter().enumerate().any(|(a, &b)| a != b) {
            return Err(LabError::EigenvalueCollision(0.0));
        }
        let n = logs.len();
        let mut v = CMat::zeros(n, n);
        let mut numeric = Vec::with_capacity(n);
        for j in 0..n {
            let (l, vec) = numeric_pair(pair.operator(i), pair.inverse_operator(i), &logs, j)?;
            numeric.push(l);
            v.set_column(j, &vec);
        }
        Ok(EigenData {
            log_eigenvalues: logs,
            numeric_log_eigenvalues: numeric,
            eigenvectors: v,
            index_assignment: order.clone(),
        })
    };
    Ok((build(0)?, build(1)?))
}

/// `μ = λ_low / λ_high` for a 2×2 operator.
pub fn projective_multiplier(ed: &EigenData) -> Result<C64> {
    Ok(log_projective_multiplier(ed)?.exp())
}

/// `ln μ`, which stays finite where `μ` itself underflows.
pub fn log_projective_multiplier(ed: &EigenData) -> Result<C64> {
    if ed.dim() != 2 {
        return Err(LabError::DimensionMismatch(
            "projective multiplier needs n = 2".into(),
        ));
    }
    let (a, b) = (ed.log_eigenvalues[0], ed.log_eigenvalues[1]);
    if a.re == b.re {
        return Err(LabError::EqualModules);
    }
    Ok(if a.re < b.re { a - b } else { b - a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};
    use crate::monodromy::{monodromy_operators, DEFAULT_T0};

    #[test]
    fn multiplier_examples() {
        let e = EigenData::from_operator(&diag(&[c(4.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert!((projective_multiplier(&e).unwrap() - c(0.25, 0.0)).norm() < 1e-15);
        let e = EigenData::from_operator(&diag(&[c(0.0, 2.0), c(1.0, 0.0)])).unwrap();
        assert!((projective_multiplier(&e).unwrap() - c(0.0, -0.5)).norm() < 1e-15);
        let e = EigenData::from_operator(&diag(&[c(2.0, 0.0), c(1.0, 0.0)])).unwrap();
        assert_eq!(e.index_assignment, vec![0, 1]);
        assert!(matches!(
            EigenData::from_operator(&diag(&[c(1.0, 0.0), c(0.0, 1.0)])),
            Err(LabError::EigenvalueCollision(_))
        ));
    }

    #[test]
    fn euler_labels_and_multiplier() {
        let fam = ConfluentFamily::euler();
        assert_eq!(label_order(&fam).unwrap(), vec![0, 1]);
        let p = monodromy_operators(&fam, 0.5, DEFAULT_T0, 1e-10).unwrap();
        let (e0, e1) = eigen_index(&p, &fam).unwrap();
        let two_pi = c(TAU, 0.0);
        assert!((e0.log_eigenvalues[0] - two_pi).norm() < 1e-12);
        assert!((e1.log_eigenvalues[1] - two_pi).norm() < 1e-12);
        assert!(e0.numeric_discrepancy() < 1e-8 && e1.numeric_discrepancy() < 1e-8);
        let mu = projective_multiplier(&e0).unwrap();
        assert!((mu.re - 3.4873423562089e-6).abs() < 1e-15, "{mu}");
        assert!(e0.reconstruction_residual(&p.m0).unwrap() < 1e-9);
    }

    #[test]
    fn t3_prop_ordering_and_reconstruction() {
        let fam = ConfluentFamily::t3();
        let p = monodromy_operators(&fam, 0.2, DEFAULT_T0, 1e-11).unwrap();
        let (e0, e1) = eigen_index(&p, &fam).unwrap();
        assert!(e0.log_eigenvalues[0].re > e0.log_eigenvalues[1].re);
        assert!(e1.log_eigenvalues[0].re < e1.log_eigenvalues[1].re);
        assert!(
            e0.numeric_discrepancy() < 1e-8,
            "{}",
            e0.numeric_discrepancy()
        );
        assert!(e1.numeric_discrepancy() < 1e-8);
        assert!(e0.reconstruction_residual(&p.m0).unwrap() < 1e-9);
        assert!(e1.reconstruction_residual(&p.m1).unwrap() < 1e-9);
    }

    #[test]
    fn principal_branch() {
        let z = principal_log(c(1.0, 7.0));
        assert!((z.im - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(principal_log(c(0.0, PI)).im, PI);
    }
}
