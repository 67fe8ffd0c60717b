//! Lax data on the constant background and the explicit seed eigenfunction.
//!
//! The spatial problem is `MΦ = UΦ` with `M = diag(∂x, ∂y)`, i.e. the first
//! row of `Φ` is differentiated in `x` and the second row in `y`. The time
//! problem is `Φ_t = VΦ` where `V` contains the second-order operator
//! `i(∂x² + ∂y²) − 2{(α+λ⁻²)∂x − (β−λ⁻²)∂y}` on its diagonal.

use num_complex::Complex64;
use thiserror::Error;

use crate::algebra::{jet_exp, AlgebraError, CScalar, Jet, Mat2, Mat2Jet, I};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LaxError {
    #[error("spectral parameter must be nonzero")]
    ZeroLambda,
    #[error("degenerate seed: {0}")]
    DegenerateSeed(&'static str),
    #[error("stencil too small: {0}")]
    StencilTooSmall(&'static str),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Nonzero spectral parameter λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralValue(CScalar);

impl SpectralValue {
    pub fn new(lambda: CScalar) -> Result<Self, LaxError> {
        if lambda.norm() == 0.0 || !lambda.is_finite() {
            return Err(LaxError::ZeroLambda);
        }
        Ok(SpectralValue(lambda))
    }

    pub fn get(self) -> CScalar {
        self.0
    }

    /// λ⁻²
    pub fn inv_sq(self) -> CScalar {
        (self.0 * self.0).inv()
    }
}

/// How the time exponents ξ₁, ξ₂ of the seed are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeExponents {
    /// ξ₁, ξ₂ follow from substituting the seed into `Φ_t = VΦ`.
    Dispersion,
    /// Fixed constants, independent of λ. Only consistent by accident.
    Fixed { xi1: CScalar, xi2: CScalar },
}

/// Constants of the trivial background and its Jost solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedParams {
    pub q0: CScalar,
    pub r0: CScalar,
    pub m0: CScalar,
    pub n0: CScalar,
    pub a: CScalar,
    pub b: CScalar,
    pub alpha: CScalar,
    pub beta: CScalar,
    pub k: CScalar,
    pub a10: CScalar,
    pub a20: CScalar,
    pub time: TimeExponents,
}

/// Exponent rates of one seed column, `exp(θx + χy + ξt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnExponent {
    pub theta: CScalar,
    pub chi: CScalar,
    pub xi: CScalar,
}

impl SeedParams {
    /// Seed whose eigenfunction solves both Lax equations: `a = −q0/2`,
    /// `b = −r0/2`, `A10 = A20 = a_bg` and ξ from the dispersion relation.
    #[allow(clippy::too_many_arguments)]
    pub fn consistent(
        q0: CScalar,
        r0: CScalar,
        m0: CScalar,
        n0: CScalar,
        alpha: CScalar,
        beta: CScalar,
        k: CScalar,
        a_bg: CScalar,
    ) -> Result<Self, LaxError> {
        let p = SeedParams {
            q0,
            r0,
            m0,
            n0,
            a: -q0 * 0.5,
            b: -r0 * 0.5,
            alpha,
            beta,
            k,
            a10: a_bg,
            a20: a_bg,
            time: TimeExponents::Dispersion,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LaxError> {
        let all = [
            self.q0, self.r0, self.m0, self.n0, self.a, self.b, self.alpha, self.beta, self.k,
            self.a10, self.a20,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(LaxError::DegenerateSeed("non-finite constant"));
        }
        if self.m0.norm() == 0.0 || self.n0.norm() == 0.0 {
            return Err(LaxError::DegenerateSeed("m0 and n0 must be nonzero"));
        }
        if (self.m0 - self.n0).norm() <= 1e-12 * self.m0.norm().max(self.n0.norm()) {
            return Err(LaxError::DegenerateSeed("m0 = n0 makes the seed singular"));
        }
        Ok(())
    }

    /// True when the background relations forced by the Lax pair hold.
    pub fn is_consistent(&self) -> bool {
        let tol = 1e-14;
        (self.a + self.q0 * 0.5).norm() <= tol * (1.0 + self.q0.norm())
            && (self.b + self.r0 * 0.5).norm() <= tol * (1.0 + self.r0.norm())
            && (self.a10 - self.a20).norm() <= tol * (1.0 + self.a10.norm())
            && self.time == TimeExponents::Dispersion
    }

    /// Time rate forced by `Φ_t = VΦ` on a column with spatial rates θ, χ.
    pub fn dispersion(&self, lambda: SpectralValue, theta: CScalar, chi: CScalar) -> CScalar {
        let ls = lambda.inv_sq();
        let wx = self.alpha + ls;
        let wy = self.beta - ls;
        I * big_lambda_sv(self.alpha, self.beta, self.k, lambda) + I * (theta * theta + chi * chi)
            - 2.0 * (wx * theta - wy * chi)
            + I * self.a10
    }

    /// Rates of both seed columns at spectral value λ.
    pub fn exponents(&self, lambda: SpectralValue) -> [ColumnExponent; 2] {
        let ls = lambda.inv_sq();
        let base_x = -I * (self.alpha + ls);
        let base_y = I * (self.beta - ls);
        let col = |mix: CScalar, fixed_xi: Option<CScalar>| {
            let theta = base_x + self.a * mix;
            let chi = self.b / mix + base_y;
            let xi = fixed_xi.unwrap_or_else(|| self.dispersion(lambda, theta, chi));
            ColumnExponent { theta, chi, xi }
        };
        match self.time {
            TimeExponents::Dispersion => [col(self.m0, None), col(self.n0, None)],
            TimeExponents::Fixed { xi1, xi2 } => [col(self.m0, Some(xi1)), col(self.n0, Some(xi2))],
        }
    }
}

/// `U = [[−i(α+λ⁻²), −q/2], [−r/2, i(β−λ⁻²)]]`.
pub fn build_u(
    q: CScalar,
    r: CScalar,
    alpha: CScalar,
    beta: CScalar,
    lambda: CScalar,
) -> Result<Mat2, LaxError> {
    let sv = SpectralValue::new(lambda)?;
    Ok(build_u_sv(q, r, alpha, beta, sv))
}

pub fn build_u_sv(
    q: CScalar,
    r: CScalar,
    alpha: CScalar,
    beta: CScalar,
    lambda: SpectralValue,
) -> Mat2 {
    let ls = lambda.inv_sq();
    Mat2::new(-I * (alpha + ls), -q * 0.5, -r * 0.5, I * (beta - ls))
}

/// `Λ = K² − (α+λ⁻²)² − (β−λ⁻²)²`.
pub fn big_lambda(
    alpha: CScalar,
    beta: CScalar,
    k: CScalar,
    lambda: CScalar,
) -> Result<CScalar, LaxError> {
    Ok(big_lambda_sv(alpha, beta, k, SpectralValue::new(lambda)?))
}

fn big_lambda_sv(alpha: CScalar, beta: CScalar, k: CScalar, lambda: SpectralValue) -> CScalar {
    let ls = lambda.inv_sq();
    let wx = alpha + ls;
    let wy = beta - ls;
    k * k - wx * wx - wy * wy
}

/// Scalar factor `exp{i(α+λ⁻²)x − i(β−λ⁻²)y}` with `Ψ = Φ·factor`.
pub fn gauge_factor(
    alpha: CScalar,
    beta: CScalar,
    lambda: CScalar,
    x: f64,
    y: f64,
) -> Result<CScalar, LaxError> {
    let ls = SpectralValue::new(lambda)?.inv_sq();
    Ok((I * (alpha + ls) * x - I * (beta - ls) * y).exp())
}

/// Φ̂₀ with columns `(1, m0)ᵀ e^{θ₁x+χ₁y+ξ₁t}` and `(1, n0)ᵀ e^{θ₂x+χ₂y+ξ₂t}`.
pub fn seed_eigenfunction(
    p: &SeedParams,
    lambda: CScalar,
    x: f64,
    y: f64,
    t: f64,
) -> Result<Mat2Jet, LaxError> {
    let sv = SpectralValue::new(lambda)?;
    p.validate()?;
    let [c1, c2] = p.exponents(sv);
    let e1 = jet_exp(Jet::affine(c1.xi * t, c1.theta, c1.chi, x, y))?;
    let e2 = jet_exp(Jet::affine(c2.xi * t, c2.theta, c2.chi, x, y))?;
    Ok(Mat2Jet::new(e1, e2, e1.scale(p.m0), e2.scale(p.n0)))
}

/// `M Φ` for `M = diag(∂x, ∂y)`.
pub fn m_operator(phi: &Mat2Jet) -> Mat2 {
    Mat2::new(
        phi.m[0][0].dx,
        phi.m[0][1].dx,
        phi.m[1][0].dy,
        phi.m[1][1].dy,
    )
}

/// Frobenius norm of `MΦ − UΦ`.
pub fn spatial_lax_residual(phi: &Mat2Jet, u: &Mat2) -> f64 {
    (m_operator(phi) - *u * phi.value()).norm()
}

/// Field values entering `V` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalFields {
    pub q: CScalar,
    pub r: CScalar,
    pub q_x: CScalar,
    pub r_y: CScalar,
    pub a1: CScalar,
    pub a2: CScalar,
}

impl LocalFields {
    pub fn background(p: &SeedParams) -> Self {
        LocalFields {
            q: p.q0,
            r: p.r0,
            q_x: Complex64::default(),
            r_y: Complex64::default(),
            a1: p.a10,
            a2: p.a20,
        }
    }
}

/// Finite-difference steps for the time residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilSteps {
    pub hx: f64,
    pub hy: f64,
    pub ht: f64,
}

impl StencilSteps {
    /// `h_x = h_y = 1e−3·(1+|x|)`, `h_t = 1e−3`.
    pub fn default_at(x: f64) -> Self {
        let h = 1e-3 * (1.0 + x.abs());
        StencilSteps {
            hx: h,
            hy: h,
            ht: 1e-3,
        }
    }

    fn check(&self) -> Result<(), LaxError> {
        for h in [self.hx, self.hy, self.ht] {
            if !(h.is_finite() && h > 0.0) {
                return Err(LaxError::StencilTooSmall(
                    "steps must be positive and finite",
                ));
            }
        }
        Ok(())
    }
}

/// Samples of Φ on a 13-point star around `(x, y, t)`: offsets ±h, ±2h along
/// each axis plus the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiStencil {
    pub steps: StencilSteps,
    pub center: Mat2,
    /// `[−2h, −h, +h, +2h]` along x.
    pub along_x: [Mat2; 4],
    pub along_y: [Mat2; 4],
    pub along_t: [Mat2; 4],
}

const OFFSETS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

impl PhiStencil {
    pub fn sample<E, F>(phi: F, x: f64, y: f64, t: f64, steps: StencilSteps) -> Result<Self, E>
    where
        F: Fn(f64, f64, f64) -> Result<Mat2, E>,
        E: From<LaxError>,
    {
        steps.check()?;
        let mut along_x = [Mat2::zero(); 4];
        let mut along_y = [Mat2::zero(); 4];
        let mut along_t = [Mat2::zero(); 4];
        for (k, o) in OFFSETS.iter().enumerate() {
            along_x[k] = phi(x + o * steps.hx, y, t)?;
            along_y[k] = phi(x, y + o * steps.hy, t)?;
            along_t[k] = phi(x, y, t + o * steps.ht)?;
        }
        Ok(PhiStencil {
            steps,
            center: phi(x, y, t)?,
            along_x,
            along_y,
            along_t,
        })
    }

    fn d1(s: &[Mat2; 4], h: f64) -> Mat2 {
        // (f(−2h) − 8f(−h) + 8f(h) − f(2h)) / 12h
        (s[0] - s[3] + (s[2] - s[1]).scale(8.0.into())).scale((1.0 / (12.0 * h)).into())
    }

    fn d2(s: &[Mat2; 4], c: &Mat2, h: f64) -> Mat2 {
        // (−f(−2h) + 16f(−h) − 30f + 16f(h) − f(2h)) / 12h²
        let sum = (s[1] + s[2]).scale(16.0.into()) - (s[0] + s[3]) - c.scale(30.0.into());
        sum.scale((1.0 / (12.0 * h * h)).into())
    }
}

/// `VΦ` given the derivatives of Φ.
#[allow(clippy::too_many_arguments)]
pub fn v_action(
    phi: &Mat2,
    phi_x: &Mat2,
    phi_y: &Mat2,
    phi_xx: &Mat2,
    phi_yy: &Mat2,
    local: &LocalFields,
    alpha: CScalar,
    beta: CScalar,
    k: CScalar,
    lambda: SpectralValue,
) -> Mat2 {
    let ls = lambda.inv_sq();
    let wx = alpha + ls;
    let wy = beta - ls;
    let lam = big_lambda_sv(alpha, beta, k, lambda);
    let mut out = Mat2::zero();
    for j in 0..2 {
        for i in 0..2 {
            let pot = if i == 0 { local.a1 } else { local.a2 };
            let diff = I * (phi_xx.m[i][j] + phi_yy.m[i][j])
                - 2.0 * (wx * phi_x.m[i][j] - wy * phi_y.m[i][j]);
            out.m[i][j] = I * (lam + pot) * phi.m[i][j] + diff;
        }
        out.m[0][j] += I * local.q_x * phi.m[1][j];
        out.m[1][j] += I * local.r_y * phi.m[0][j];
    }
    out
}

/// Frobenius norm of `∂tΦ − VΦ` with every derivative of Φ taken from
/// fourth-order central differences on the stencil.
pub fn time_lax_residual(
    stencil: &PhiStencil,
    local: &LocalFields,
    alpha: CScalar,
    beta: CScalar,
    k: CScalar,
    lambda: CScalar,
) -> Result<f64, LaxError> {
    let sv = SpectralValue::new(lambda)?;
    stencil.steps.check()?;
    let s = stencil;
    let phi_t = PhiStencil::d1(&s.along_t, s.steps.ht);
    let phi_x = PhiStencil::d1(&s.along_x, s.steps.hx);
    let phi_y = PhiStencil::d1(&s.along_y, s.steps.hy);
    let phi_xx = PhiStencil::d2(&s.along_x, &s.center, s.steps.hx);
    let phi_yy = PhiStencil::d2(&s.along_y, &s.center, s.steps.hy);
    let v = v_action(
        &s.center, &phi_x, &phi_y, &phi_xx, &phi_yy, local, alpha, beta, k, sv,
    );
    Ok((phi_t - v).norm())
}
