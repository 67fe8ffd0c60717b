//! Complex scalars, first-order jets and 2×2 matrices.
//!
//! A [`Jet`] carries a value together with its exact partial derivatives in
//! `x` and `y`. Arithmetic on jets follows the product and quotient rules, so
//! any expression built from jets yields its own first derivatives without
//! finite differencing. [`Mat2Jet`] lifts this to 2×2 matrices.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type CScalar = Complex64;

/// Largest admissible real part of an exponent passed to [`jet_exp`].
pub const EXP_CAP: f64 = 200.0;

/// Relative singularity threshold for [`Mat2::inv`].
pub const SINGULAR_TOL: f64 = 1e-12;

pub const I: CScalar = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> CScalar {
    Complex64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> CScalar {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AlgebraError {
    #[error("singular matrix (|det| = {det:e})")]
    SingularMatrix { det: f64 },
    #[error("exponent real part {re} exceeds cap {cap}")]
    Overflow { re: f64, cap: f64 },
}

/// Value with exact first derivatives in `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub val: CScalar,
    pub dx: CScalar,
    pub dy: CScalar,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        val: Complex64 { re: 0.0, im: 0.0 },
        dx: Complex64 { re: 0.0, im: 0.0 },
        dy: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn new(val: CScalar, dx: CScalar, dy: CScalar) -> Self {
        Jet { val, dx, dy }
    }

    pub fn constant(val: CScalar) -> Self {
        Jet {
            val,
            dx: CScalar::default(),
            dy: CScalar::default(),
        }
    }

    /// Affine function `k0 + kx·x + ky·y` evaluated at `(x, y)`.
    pub fn affine(k0: CScalar, kx: CScalar, ky: CScalar, x: f64, y: f64) -> Self {
        Jet {
            val: k0 + kx * x + ky * y,
            dx: kx,
            dy: ky,
        }
    }

    pub fn scale(self, s: CScalar) -> Self {
        Jet {
            val: self.val * s,
            dx: self.dx * s,
            dy: self.dy * s,
        }
    }

    pub fn recip(self) -> Self {
        let inv = self.val.inv();
        let d = -inv * inv;
        Jet {
            val: inv,
            dx: self.dx * d,
            dy: self.dy * d,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.val.is_finite() && self.dx.is_finite() && self.dy.is_finite()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.val + o.val, self.dx + o.dx, self.dy + o.dy)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.val - o.val, self.dx - o.dx, self.dy - o.dy)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::new(-self.val, -self.dx, -self.dy)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.val * o.val,
            self.dx * o.val + self.val * o.dx,
            self.dy * o.val + self.val * o.dy,
        )
    }
}

impl Mul<CScalar> for Jet {
    type Output = Jet;
    fn mul(self, s: CScalar) -> Jet {
        self.scale(s)
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// Exponential of a jet. Fails when the real part of the exponent exceeds
/// `cap`.
pub fn jet_exp_capped(z: Jet, cap: f64) -> Result<Jet, AlgebraError> {
    if !(z.val.re <= cap) {
        return Err(AlgebraError::Overflow { re: z.val.re, cap });
    }
    let e = z.val.exp();
    Ok(Jet::new(e, e * z.dx, e * z.dy))
}

pub fn jet_exp(z: Jet) -> Result<Jet, AlgebraError> {
    jet_exp_capped(z, EXP_CAP)
}

/// Dense 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[CScalar; 2]; 2],
}

impl Mat2 {
    pub fn new(m11: CScalar, m12: CScalar, m21: CScalar, m22: CScalar) -> Self {
        Mat2 {
            m: [[m11, m12], [m21, m22]],
        }
    }

    pub fn identity() -> Self {
        Mat2::new(re(1.0), re(0.0), re(0.0), re(1.0))
    }

    pub fn zero() -> Self {
        Mat2::default()
    }

    pub fn det(&self) -> CScalar {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn adjugate(&self) -> Mat2 {
        Mat2::new(self.m[1][1], -self.m[0][1], -self.m[1][0], self.m[0][0])
    }

    pub fn scale(&self, s: CScalar) -> Mat2 {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|e| *e *= s);
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Adjugate over determinant. Singular when
    /// `|det| <= SINGULAR_TOL * max(1, ‖m‖²)`.
    pub fn inv(&self) -> Result<Mat2, AlgebraError> {
        let det = self.det();
        let scale = self.norm().powi(2).max(1.0);
        if !(det.norm() > SINGULAR_TOL * scale) {
            return Err(AlgebraError::SingularMatrix { det: det.norm() });
        }
        Ok(self.adjugate().scale(det.inv()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|e| e.is_finite())
    }

    pub fn entries(&self) -> [CScalar; 4] {
        [self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += o.m[i][j];
            }
        }
        out
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + o.scale(re(-1.0))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let mut out = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        out
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]
        )
    }
}

/// 2×2 matrix of jets.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2Jet {
    pub m: [[Jet; 2]; 2],
}

impl Mat2Jet {
    pub fn new(m11: Jet, m12: Jet, m21: Jet, m22: Jet) -> Self {
        Mat2Jet {
            m: [[m11, m12], [m21, m22]],
        }
    }

    pub fn from_mat2(a: &Mat2) -> Self {
        let k = |i: usize, j: usize| Jet::constant(a.m[i][j]);
        Mat2Jet::new(k(0, 0), k(0, 1), k(1, 0), k(1, 1))
    }

    pub fn identity() -> Self {
        Mat2Jet::from_mat2(&Mat2::identity())
    }

    fn project(&self, f: impl Fn(&Jet) -> CScalar) -> Mat2 {
        Mat2::new(
            f(&self.m[0][0]),
            f(&self.m[0][1]),
            f(&self.m[1][0]),
            f(&self.m[1][1]),
        )
    }

    pub fn value(&self) -> Mat2 {
        self.project(|j| j.val)
    }

    pub fn dx(&self) -> Mat2 {
        self.project(|j| j.dx)
    }

    pub fn dy(&self) -> Mat2 {
        self.project(|j| j.dy)
    }

    pub fn scale(&self, s: Jet) -> Mat2Jet {
        let mut out = *self;
        out.m.iter_mut().flatten().for_each(|e| *e = *e * s);
        out
    }

    pub fn det(&self) -> Jet {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(Jet::is_finite)
    }
}

impl Add for Mat2Jet {
    type Output = Mat2Jet;
    fn add(self, o: Mat2Jet) -> Mat2Jet {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = out.m[i][j] + o.m[i][j];
            }
        }
        out
    }
}

impl Mul for Mat2Jet {
    type Output = Mat2Jet;
    fn mul(self, o: Mat2Jet) -> Mat2Jet {
        let mut out = Mat2Jet::default();
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        out
    }
}

/// Entrywise product with jets propagated by the product rule.
pub fn mat_mul(a: &Mat2Jet, b: &Mat2Jet) -> Mat2Jet {
    *a * *b
}

pub fn mat_inv(m: &Mat2) -> Result<Mat2, AlgebraError> {
    m.inv()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: CScalar, b: CScalar, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn identity_times_m() {
        let m = Mat2::new(c(1.0, 2.0), c(-0.5, 0.1), c(3.0, 0.0), c(0.0, -1.0));
        assert_eq!(Mat2::identity() * m, m);
        let mj = Mat2Jet::from_mat2(&m);
        assert_eq!(mat_mul(&Mat2Jet::identity(), &mj), mj);
    }

    #[test]
    fn hand_product_entry() {
        let a = Mat2::new(re(1.0), I, re(0.0), re(1.0));
        let b = Mat2::new(re(1.0), re(0.0), I, re(1.0));
        assert_eq!((a * b).m[0][0], re(0.0));
    }

    #[test]
    fn inverse_cases() {
        let m = Mat2::new(re(1.0), re(1.0), re(1.0), re(2.0));
        let inv = mat_inv(&m).unwrap();
        let want = Mat2::new(re(2.0), re(-1.0), re(-1.0), re(1.0));
        assert!((inv - want).norm() < 1e-15);
        assert_eq!(mat_inv(&Mat2::identity()).unwrap(), Mat2::identity());
        let s = Mat2::new(re(1.0), re(1.0), re(1.0), re(1.0));
        assert!(matches!(
            mat_inv(&s),
            Err(AlgebraError::SingularMatrix { .. })
        ));
        let w = Mat2::new(c(0.3, 1.0), c(-2.0, 0.5), c(0.7, 0.0), c(1.0, 1.0));
        assert!((w * w.inv().unwrap() - Mat2::identity()).norm() < 1e-12);
    }

    #[test]
    fn exp_cases() {
        let one = jet_exp(Jet::ZERO).unwrap();
        assert_eq!(one, Jet::constant(re(1.0)));
        let e = jet_exp(Jet::constant(c(0.0, PI))).unwrap();
        assert!(close(e.val, re(-1.0), 1e-15));
        assert!(matches!(
            jet_exp(Jet::constant(re(201.0))),
            Err(AlgebraError::Overflow { .. })
        ));
        assert!(jet_exp_capped(Jet::constant(re(5.0)), 4.0).is_err());
    }

    #[test]
    fn exp_jet_matches_central_difference() {
        let theta = c(0.7, -1.3);
        let x = 0.4;
        let h = 1e-5;
        let z = Jet::affine(re(0.0), theta, re(0.0), x, 0.0);
        let e = jet_exp(z).unwrap();
        let fd = ((theta * (x + h)).exp() - (theta * (x - h)).exp()) / (2.0 * h);
        assert!((e.dx - fd).norm() / e.dx.norm() < 1e-8);
        assert!(close(e.val, (theta * x).exp(), 1e-15));
    }

    #[test]
    fn quotient_rule() {
        let f = Jet::new(c(1.0, 2.0), c(0.5, 0.0), c(0.0, 1.0));
        let g = Jet::new(c(-0.3, 1.0), c(0.2, 0.1), c(1.0, 0.0));
        let q = f / g;
        let want_dx = (f.dx * g.val - f.val * g.dx) / (g.val * g.val);
        assert!(close(q.dx, want_dx, 1e-14));
        assert!(close(q.val, f.val / g.val, 1e-15));
    }

    #[test]
    fn zero_jet_roundtrip() {
        let m = Mat2::new(c(1.0, 2.0), c(-0.5, 0.1), c(3.0, 0.0), c(0.0, -1.0));
        assert_eq!(Mat2Jet::from_mat2(&m).value(), m);
        assert_eq!(Mat2Jet::from_mat2(&m).dx(), Mat2::zero());
    }
}
