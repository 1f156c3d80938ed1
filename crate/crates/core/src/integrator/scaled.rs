use crate::error::{LabError, Result};
use crate::linalg;
use crate::{CMat, C64};

/// `exp(log_scale) · core`, with the core's max-norm kept in `[1/2, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    core: CMat,
    log_scale: C64,
}

impl ScaledMatrix {
    /// Builds and normalizes. A zero matrix keeps its zero core.
    pub fn new(core: CMat, log_scale: C64) -> Self {
        let mut m = ScaledMatrix { core, log_scale };
        m.renormalize();
        m
    }

    pub fn from_matrix(m: CMat) -> Self {
        Self::new(m, C64::new(0.0, 0.0))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(CMat::identity(n, n))
    }

    /// Rescales the core to max-norm one if it left `[1/2, 2]`.
    pub fn renormalize(&mut self) {
        let nrm = linalg::max_norm(&self.core);
        if nrm == 0.0 || !nrm.is_finite() {
            return;
        }
        if !(0.5..=2.0).contains(&nrm) {
            self.core.apply(|z| *z = z.unscale(nrm));
            self.log_scale += nrm.ln();
        }
    }

    pub fn core(&self) -> &CMat {
        &self.core
    }

    pub fn log_scale(&self) -> C64 {
        self.log_scale
    }

    pub fn dim(&self) -> usize {
        self.core.nrows()
    }

    /// The represented matrix; entries overflow to infinity when too large.
    pub fn to_matrix(&self) -> CMat {
        let s = self.log_scale.exp();
        &self.core * s
    }

    /// Natural log of the represented max-norm.
    pub fn ln_norm(&self) -> f64 {
        self.log_scale.re + linalg::max_norm(&self.core).ln()
    }

    pub fn compose(&self, right: &ScaledMatrix) -> Result<ScaledMatrix> {
        if self.dim() != right.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.dim(),
                self.dim(),
                right.dim(),
                right.dim()
            )));
        }
        Ok(ScaledMatrix::new(
            &self.core * &right.core,
            self.log_scale + right.log_scale,
        ))
    }

    pub fn inverse(&self) -> Result<ScaledMatrix> {
        let inv = linalg::inverse(&self.core)?;
        Ok(ScaledMatrix::new(inv, -self.log_scale))
    }

    /// log of the determinant (branch of the imaginary part unspecified).
    pub fn ln_det(&self) -> C64 {
        let d = linalg::det(&self.core);
        d.ln() + self.log_scale * self.dim() as f64
    }

    pub fn scale(&self, log_factor: C64) -> ScaledMatrix {
        ScaledMatrix::new(self.core.clone(), self.log_scale + log_factor)
    }

    /// Max-norm of `self - other` divided by the larger of the two norms,
    /// computed after aligning scales (no overflow).
    pub fn relative_distance(&self, other: &ScaledMatrix) -> f64 {
        let la = self.ln_norm();
        let lb = other.ln_norm();
        let top = la.max(lb);
        if !top.is_finite() {
            return if la == lb { 0.0 } else { f64::INFINITY };
        }
        let a = &self.core * (self.log_scale - top).exp();
        let b = &other.core * (other.log_scale - top).exp();
        linalg::max_diff(&a, &b)
    }

    /// Largest per-column relative difference. Columns are solutions, so this
    /// is the natural accuracy measure for transfer matrices whose columns
    /// differ in size by many orders of magnitude.
    pub fn column_distance(&self, other: &ScaledMatrix) -> f64 {
        let n = self.dim();
        let shift = other.log_scale - self.log_scale;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let a = self.core.column(j);
            let mut na: f64 = 0.0;
            let mut nd: f64 = 0.0;
            for i in 0..n {
                let bv = other.core[(i, j)] * shift.exp();
                na = na.max(a[i].norm());
                nd = nd.max((a[i] - bv).norm());
            }
            if na > 0.0 {
                worst = worst.max(nd / na);
            } else if nd > 0.0 {
                worst = f64::INFINITY;
            }
        }
        worst
    }
}
