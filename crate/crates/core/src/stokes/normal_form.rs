//! Formal diagonalization of `t² ż = A(t) z` at `t = 0`.
//!
//! With `z = Ĥ(t) w`, `Ĥ = Σ H_m t^m`, `H₀ = I`, the normal form is
//! `t² ẇ = (Λ + B₁ t) w`. Matching powers of `t` in `A Ĥ - t² Ĥ' = Ĥ B` gives
//!
//! `[Λ, H_m] = H_{m-1} B₁ - Σ_{i≥1} A_i H_{m-i} + (m-1) H_{m-1}`.
//!
//! The off-diagonal part fixes `H_m`; the diagonal part fixes `B₁ = diag A₁`
//! at order one and the diagonal of `H_{m-1}` at order `m ≥ 2`.

use crate::error::{LabError, Result};
use crate::linalg;
use crate::{CMat, C64};

/// `b_i(t) = λ_i + β_i t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormalNormalForm {
    pub lambda: Vec<C64>,
    pub beta: Vec<C64>,
}

impl FormalNormalForm {
    /// Coefficients of `b_i`, constant term first.
    pub fn polynomial(&self, i: usize) -> [C64; 2] {
        [self.lambda[i], self.beta[i]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedNormalization {
    /// `H_0 = I, H_1, ..., H_N`.
    pub h: Vec<CMat>,
    /// Largest relative residual of the order-by-order identity.
    pub residual: f64,
}

impl TruncatedNormalization {
    pub fn order(&self) -> usize {
        self.h.len() - 1
    }

    /// `Σ_{m<terms} H_m t^m`.
    pub fn partial_sum(&self, t: C64, terms: usize) -> CMat {
        let n = self.h[0].nrows();
        let mut acc = CMat::zeros(n, n);
        for m in (0..terms.min(self.h.len())).rev() {
            acc = acc * t + &self.h[m];
        }
        acc
    }

    /// `‖H_m‖ r^m` for each `m`.
    pub fn term_norms(&self, r: f64) -> Vec<f64> {
        self.h
            .iter()
            .enumerate()
            .map(|(m, h)| linalg::max_norm(h) * r.powi(m as i32))
            .collect()
    }
}

fn coeff(a: &[CMat], i: usize, n: usize) -> CMat {
    a.get(i).cloned().unwrap_or_else(|| CMat::zeros(n, n))
}

/// Right-hand side `R_m` with the current `H`.
fn rhs(a: &[CMat], h: &[CMat], b1: &CMat, m: usize) -> CMat {
    let mut r = &h[m - 1] * b1 + &h[m - 1] * C64::from((m - 1) as f64);
    for i in 1..=m {
        if i < a.len() {
            r -= &a[i] * &h[m - i];
        }
    }
    r
}

/// Normal form and normalizing series through order `order`. `a[0]` must be
/// diagonal with distinct entries.
pub fn formal_normal_form(
    a: &[CMat],
    order: usize,
) -> Result<(FormalNormalForm, TruncatedNormalization)> {
    if order == 0 {
        return Err(LabError::InvalidArgument("order must be at least 1".into()));
    }
    let a0 = a
        .first()
        .ok_or_else(|| LabError::InvalidArgument("empty coefficient list".into()))?;
    let n = a0.nrows();
    let scale = linalg::max_norm(a0).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..n {
            if i != j && a0[(i, j)].norm() > 1e-14 * scale {
                return Err(LabError::InvalidArgument(
                    "leading matrix must be diagonal; conjugate first".into(),
                ));
            }
        }
    }
    let lambda: Vec<C64> = (0..n).map(|i| a0[(i, i)]).collect();
    for i in 0..n {
        for j in i + 1..n {
            if (lambda[i] - lambda[j]).norm() <= 1e-14 * scale {
                return Err(LabError::ResonantLeadingMatrix);
            }
        }
    }
    let a1 = coeff(a, 1, n);
    let beta: Vec<C64> = (0..n).map(|i| a1[(i, i)]).collect();
    let b1 = linalg::diag(&beta);

    let mut h: Vec<CMat> = vec![CMat::identity(n, n)];
    for m in 1..=order + 1 {
        h.push(CMat::zeros(n, n));
        if m >= 2 {
            // the diagonal of H_{m-1} enters diag(R_m) as (m-1)·h
            let r = rhs(a, &h, &b1, m);
            for i in 0..n {
                h[m - 1][(i, i)] = -r[(i, i)] / (m - 1) as f64;
            }
        }
        let r = rhs(a, &h, &b1, m);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    h[m][(i, j)] = r[(i, j)] / (lambda[i] - lambda[j]);
                }
            }
        }
    }
    h.truncate(order + 1);

    // residual of Λ H_m - H_m Λ - R_m, including the diagonal
    let mut residual: f64 = 0.0;
    let lam = linalg::diag(&lambda);
    let mut hx = h.clone();
    hx.push(CMat::zeros(n, n));
    for m in 1..=order {
        let r = rhs(a, &hx, &b1, m);
        let lhs = &lam * &hx[m] - &hx[m] * &lam;
        let size = 1.0 + linalg::max_norm(&r).max(linalg::max_norm(&lhs));
        residual = residual.max(linalg::max_diff(&lhs, &r) / size);
    }

    Ok((
        FormalNormalForm { lambda, beta },
        TruncatedNormalization { h, residual },
    ))
}
