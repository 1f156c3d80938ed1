//! Synthetic eigenvalue/transition data for the commutator limit, with no
//! integration involved.

use rand::Rng;

use super::transition::factored_commutator;
use crate::error::Result;
use crate::linalg;
use crate::xnum::{XComplex, XMatrix};
use crate::{CMat, C64};

/// `C(ν) = L + Σ_{j<k} U_jk ν^{p(k-j)}` with `L` lower-unipotent, paired with
/// `Λ̃₀ = diag(ν₀^j)` (decreasing modules) and `Λ̃₁ = diag(ν₁^{n-1-j})`
/// (increasing). For `p > 2` the upper entries are `o((ν₀ν₁)^{k-j})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFamily {
    pub limit: CMat,
    pub upper: CMat,
    pub upper_power: f64,
}

impl SyntheticFamily {
    /// Entries uniform in the unit square.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut draw = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut limit = CMat::identity(n, n);
        let mut upper = CMat::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                if j > k {
                    limit[(j, k)] = draw();
                } else if j < k {
                    upper[(j, k)] = draw();
                }
            }
        }
        SyntheticFamily {
            limit,
            upper,
            upper_power: 3.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.limit.nrows()
    }

    pub fn transition(&self, nu: f64) -> CMat {
        let n = self.dim();
        CMat::from_fn(n, n, |j, k| {
            if j < k {
                self.upper[(j, k)] * nu.powf(self.upper_power * (k - j) as f64)
            } else {
                self.limit[(j, k)]
            }
        })
    }

    pub fn multipliers(&self, nu0: f64, nu1: f64) -> (Vec<XComplex>, Vec<XComplex>) {
        let n = self.dim();
        let l0 = (0..n)
            .map(|j| XComplex::exp(C64::new(j as f64 * nu0.ln(), 0.0)))
            .collect();
        let l1 = (0..n)
            .map(|j| XComplex::exp(C64::new((n - 1 - j) as f64 * nu1.ln(), 0.0)))
            .collect();
        (l0, l1)
    }

    pub fn commutator(&self, nu0: f64, nu1: f64) -> Result<CMat> {
        let c = self.transition(nu0.max(nu1));
        let ci = linalg::inverse(&c)?;
        let (l0, l1) = self.multipliers(nu0, nu1);
        Ok(
            factored_commutator(&XMatrix::from_cmat(&c), &XMatrix::from_cmat(&ci), &l0, &l1)
                .to_cmat(),
        )
    }

    /// Max-norm distance of the commutator to the lower-unipotent limit.
    pub fn distance(&self, nu: f64) -> Result<f64> {
        Ok(linalg::max_diff(&self.commutator(nu, nu)?, &self.limit))
    }

    /// `max(ν₀, ν₁, max_{j<k} |C_jk| / (ν₀ν₁)^{k-j})`.
    pub fn rate(&self, nu: f64) -> f64 {
        let c = self.transition(nu);
        let n = self.dim();
        let mut r = nu;
        for j in 0..n {
            for k in j + 1..n {
                r = r.max(c[(j, k)].norm() / (nu * nu).powi((k - j) as i32));
            }
        }
        r
    }
}

/// `‖Λ⁻¹ C Λ - I‖`.
pub fn conjugation_residual(c: &CMat, lambda: &[C64]) -> f64 {
    let n = c.nrows();
    let m = CMat::from_fn(n, n, |j, k| c[(j, k)] * lambda[k] / lambda[j]);
    linalg::max_diff(&m, &linalg::identity(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conjugation_tends_to_identity() {
        // Λ = diag(ν, 1), lower entry fixed, upper entry ν²
        let mut last = f64::INFINITY;
        for nu in [1e-1, 1e-2, 1e-3] {
            let c = CMat::from_row_slice(
                2,
                2,
                &[
                    C64::new(1.0, 0.0),
                    C64::new(nu * nu, 0.0),
                    C64::new(0.7, 0.2),
                    C64::new(1.0, 0.0),
                ],
            );
            let r = conjugation_residual(&c, &[C64::new(nu, 0.0), C64::new(1.0, 0.0)]);
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn synthetic_commutator_converges_at_the_predicted_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 3] {
            let f = SyntheticFamily::random(n, &mut rng);
            let mut last = f64::INFINITY;
            for nu in [1e-2, 1e-3, 1e-4] {
                let d = f.distance(nu).unwrap();
                assert!(d < last);
                assert!(
                    d <= 10.0 * f.rate(nu),
                    "n={n} nu={nu}: {d} vs {}",
                    f.rate(nu)
                );
                last = d;
            }
        }
    }
}
