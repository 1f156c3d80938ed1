//! Extended-range complex scalars.
//!
//! A value is stored as `mantissa * exp(log_scale)` with `|mantissa|` kept near
//! one, so quantities like `exp(-1000)` survive products and quotients. Sums are
//! formed after aligning scales; they lose nothing beyond ordinary rounding.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XComplex {
    mantissa: C64,
    log_scale: f64,
}

impl XComplex {
    pub const ZERO: XComplex = XComplex {
        mantissa: C64 { re: 0.0, im: 0.0 },
        log_scale: 0.0,
    };
    pub const ONE: XComplex = XComplex {
        mantissa: C64 { re: 1.0, im: 0.0 },
        log_scale: 0.0,
    };

    pub fn new(mantissa: C64, log_scale: f64) -> Self {
        XComplex {
            mantissa,
            log_scale,
        }
        .normalized()
    }

    pub fn from_c64(z: C64) -> Self {
        Self::new(z, 0.0)
    }

    /// `exp(z)` for any complex `z` without overflow.
    pub fn exp(z: C64) -> Self {
        XComplex {
            mantissa: C64::from_polar(1.0, z.im),
            log_scale: z.re,
        }
    }

    fn normalized(self) -> Self {
        let m = self.mantissa.norm();
        if m == 0.0 || !m.is_finite() {
            return XComplex {
                mantissa: self.mantissa,
                log_scale: if m == 0.0 { 0.0 } else { self.log_scale },
            };
        }
        let l = m.ln();
        XComplex {
            mantissa: self.mantissa / m,
            log_scale: self.log_scale + l,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    /// Natural log of the modulus; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log_scale + self.mantissa.norm().ln()
        }
    }

    pub fn abs(&self) -> f64 {
        self.ln_abs().exp()
    }

    /// Principal-branch logarithm.
    pub fn ln(&self) -> C64 {
        C64::new(self.ln_abs(), self.mantissa.arg())
    }

    /// Nearest `C64`; saturates to infinity / underflows to zero.
    pub fn to_c64(&self) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        self.mantissa * self.log_scale.exp()
    }

    pub fn recip(&self) -> Self {
        XComplex {
            mantissa: C64::new(1.0, 0.0) / self.mantissa,
            log_scale: -self.log_scale,
        }
        .normalized()
    }
}

impl From<C64> for XComplex {
    fn from(z: C64) -> Self {
        XComplex::from_c64(z)
    }
}

impl Mul for XComplex {
    type Output = XComplex;
    fn mul(self, rhs: XComplex) -> XComplex {
        XComplex {
            mantissa: self.mantissa * rhs.mantissa,
            log_scale: self.log_scale + rhs.log_scale,
        }
        .normalized()
    }
}

impl Div for XComplex {
    type Output = XComplex;
    fn div(self, rhs: XComplex) -> XComplex {
        self * rhs.recip()
    }
}

impl Neg for XComplex {
    type Output = XComplex;
    fn neg(self) -> XComplex {
        XComplex {
            mantissa: -self.mantissa,
            log_scale: self.log_scale,
        }
    }
}

impl Add for XComplex {
    type Output = XComplex;
    fn add(self, rhs: XComplex) -> XComplex {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.log_scale >= rhs.log_scale {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let shift = small.log_scale - big.log_scale;
        XComplex {
            mantissa: big.mantissa + small.mantissa * shift.exp(),
            log_scale: big.log_scale,
        }
        .normalized()
    }
}

impl Sub for XComplex {
    type Output = XComplex;
    fn sub(self, rhs: XComplex) -> XComplex {
        self + (-rhs)
    }
}

/// Dense square matrix of extended-range scalars, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct XMatrix {
    n: usize,
    data: Vec<XComplex>,
}

impl XMatrix {
    pub fn zeros(n: usize) -> Self {
        XMatrix {
            n,
            data: vec![XComplex::ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, XComplex::ONE);
        }
        m
    }

    pub fn from_cmat(m: &crate::CMat) -> Self {
        let n = m.nrows();
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, XComplex::from_c64(m[(i, j)]));
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> XComplex {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: XComplex) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, rhs: &XMatrix) -> XMatrix {
        let n = self.n;
        let mut out = XMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = XComplex::ZERO;
                for k in 0..n {
                    acc = acc + self.get(i, k) * rhs.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// `D^{-1} X D` for diagonal `D = diag(d)`: entry (j,k) becomes `x_jk d_k / d_j`.
    pub fn diag_conjugate(&self, d: &[XComplex]) -> XMatrix {
        let n = self.n;
        let mut out = XMatrix::zeros(n);
        for j in 0..n {
            for k in 0..n {
                out.set(j, k, self.get(j, k) * d[k] / d[j]);
            }
        }
        out
    }

    /// Saturating conversion to an ordinary complex matrix.
    pub fn to_cmat(&self) -> crate::CMat {
        crate::CMat::from_fn(self.n, self.n, |i, j| self.get(i, j).to_c64())
    }
}
