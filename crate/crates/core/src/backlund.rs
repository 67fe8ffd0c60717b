//! Pole-ansatz dressing steps.
//!
//! Each step multiplies the previous eigenfunction by
//! `B_l(λ) = Q_l + 2λ_l/(λ²−λ_l²)·P_l`, where `Q_l` and the rank-one residue
//! `P_l` are built pointwise from `Φ_{l−1}(λ_l)` and the step constants.
//! The inverse has the same shape with its pole at `λ'_l`:
//! `B_l⁻¹(λ) = Q'_l + 2λ'_l/(λ²−λ'_l²)·P'_l`.
//!
//! Two independent routes produce `Q_l, P_l`:
//!
//! * [`build_qp`] transcribes the closed-form entry formulas,
//! * [`solve_qp_oracle`] solves the linear conditions that characterise the
//!   step (normalisation `B_l(0) = F-block`, kernel of the residue, kernel of
//!   `B_l(λ'_l)`) and then recovers `Q'_l, P'_l` from `B·B⁻¹ = I`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::algebra::{jet_exp, re, AlgebraError, CScalar, Jet, Mat2, Mat2Jet, I};
use crate::laxpair::{seed_eigenfunction, LaxError, SeedParams};

/// Relative distance to a pole below which evaluation is refused.
pub const POLE_GUARD: f64 = 1e-10;

/// Default cap on the number of chained steps.
pub const MAX_DEPTH: usize = 8;

/// Condition number above which the oracle gives up.
pub const ORACLE_COND_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BacklundError {
    #[error("degenerate poles: λ_l² = λ'_l² or a zero pole")]
    DegeneratePoles,
    #[error("invalid step parameters: {0}")]
    InvalidStep(&'static str),
    #[error("vanishing denominator in step {step} at (x, y, t) = ({x}, {y}, {t})")]
    VanishingDenominator { step: usize, x: f64, y: f64, t: f64 },
    #[error("λ = {lambda} is on (or within the guard of) a pole")]
    OnPole { lambda: CScalar },
    #[error("ill-conditioned oracle system (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("depth {0} exceeds the cap of {MAX_DEPTH} steps")]
    TooDeep(usize),
    #[error(transparent)]
    Lax(#[from] LaxError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A step amplitude `f(t) = amp·e^{rate·t}`. `rate = 0` is a constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimeCoeff {
    pub amp: CScalar,
    pub rate: CScalar,
}

impl TimeCoeff {
    pub fn constant(amp: CScalar) -> Self {
        TimeCoeff { amp, rate: re(0.0) }
    }

    pub fn exponential(amp: CScalar, rate: CScalar) -> Self {
        TimeCoeff { amp, rate }
    }

    pub fn at(&self, t: f64) -> CScalar {
        if self.rate == re(0.0) {
            self.amp
        } else {
            self.amp * (self.rate * t).exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amp == re(0.0)
    }
}

/// Spectral data and constants of one dressing step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lambda: CScalar,
    pub lambda_p: CScalar,
    pub a: CScalar,
    pub b: CScalar,
    pub f11: TimeCoeff,
    pub f12: TimeCoeff,
    pub f21: TimeCoeff,
    pub f22: TimeCoeff,
    pub m1: CScalar,
    pub m1p: CScalar,
    pub m2: CScalar,
    pub m2p: CScalar,
}

impl StepParams {
    /// Reduced step: `b = 0`, `f12 = f21 = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn reduced(
        lambda: CScalar,
        lambda_p: CScalar,
        a: CScalar,
        f11: TimeCoeff,
        f22: TimeCoeff,
        m1: CScalar,
        m2p: CScalar,
    ) -> Self {
        StepParams {
            lambda,
            lambda_p,
            a,
            b: re(0.0),
            f11,
            f12: TimeCoeff::default(),
            f21: TimeCoeff::default(),
            f22,
            m1,
            m1p: re(0.0),
            m2: re(0.0),
            m2p,
        }
    }

    pub fn validate(&self) -> Result<(), BacklundError> {
        let l2 = self.lambda * self.lambda;
        let lp2 = self.lambda_p * self.lambda_p;
        if self.lambda.norm() == 0.0 || self.lambda_p.norm() == 0.0 {
            return Err(BacklundError::DegeneratePoles);
        }
        if (l2 - lp2).norm() <= 1e-12 * l2.norm().max(lp2.norm()) {
            return Err(BacklundError::DegeneratePoles);
        }
        if self.a == re(0.0) && self.b == re(0.0) {
            return Err(BacklundError::InvalidStep("a_l and b_l are both zero"));
        }
        let all = [
            self.lambda,
            self.lambda_p,
            self.a,
            self.b,
            self.f11.amp,
            self.f11.rate,
            self.f12.amp,
            self.f12.rate,
            self.f21.amp,
            self.f21.rate,
            self.f22.amp,
            self.f22.rate,
            self.m1,
            self.m1p,
            self.m2,
            self.m2p,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(BacklundError::InvalidStep("non-finite constant"));
        }
        Ok(())
    }

    pub fn is_reduced(&self) -> bool {
        self.b == re(0.0) && self.f12.is_zero() && self.f21.is_zero()
    }

    /// `λ_l²/λ'_l²`
    pub fn rho(&self) -> CScalar {
        (self.lambda * self.lambda) / (self.lambda_p * self.lambda_p)
    }
}

fn check_poles(lambda: CScalar, lambda_p: CScalar) -> Result<(CScalar, CScalar), BacklundError> {
    let l2 = lambda * lambda;
    let lp2 = lambda_p * lambda_p;
    if lambda.norm() == 0.0 || (l2 - lp2).norm() <= 1e-12 * l2.norm().max(lp2.norm()) {
        return Err(BacklundError::DegeneratePoles);
    }
    Ok((l2, lp2))
}

/// `σ_l = 2/λ_l − 2λ_l/(λ_l² − λ'_l²)`
pub fn sigma_first_form(lambda: CScalar, lambda_p: CScalar) -> Result<CScalar, BacklundError> {
    let (l2, lp2) = check_poles(lambda, lambda_p)?;
    Ok(2.0 / lambda - 2.0 * lambda / (l2 - lp2))
}

/// `σ_l = 2λ'_l²/(λ_l(λ'_l² − λ_l²))`
pub fn sigma_second_form(lambda: CScalar, lambda_p: CScalar) -> Result<CScalar, BacklundError> {
    let (l2, lp2) = check_poles(lambda, lambda_p)?;
    Ok(2.0 * lp2 / (lambda * (lp2 - l2)))
}

pub fn sigma(step: &StepParams) -> Result<CScalar, BacklundError> {
    sigma_second_form(step.lambda, step.lambda_p)
}

/// `ε'_l = 2λ'_l/(λ_l² − λ'_l²)`
pub fn epsilon_prime(step: &StepParams) -> Result<CScalar, BacklundError> {
    let l2 = step.lambda * step.lambda;
    let lp2 = step.lambda_p * step.lambda_p;
    if (l2 - lp2).norm() <= 1e-12 * l2.norm().max(lp2.norm()) {
        return Err(BacklundError::DegeneratePoles);
    }
    Ok(2.0 * step.lambda_p / (l2 - lp2))
}

/// `exp{i m (x − y)}` with jets.
fn phase(m: CScalar, x: f64, y: f64) -> Result<Jet, AlgebraError> {
    jet_exp(Jet::affine(re(0.0), I * m, -I * m, x, y))
}

/// Coefficient functions of one step at a point. `fblock` holds
/// `F^{ij}_l = f^{ij}_l(t)·exp{i m (x−y)}` with the exponent constants
/// `m1, m1p, m2, m2p` for entries 11, 12, 21, 22.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub r: Jet,
    pub rp: Jet,
    pub m: Jet,
    pub mp: Jet,
    pub l: Jet,
    pub lp: Jet,
    pub n: Jet,
    pub np: Jet,
    pub f: Jet,
    pub fp: Jet,
    pub fblock: Mat2Jet,
}

pub fn coefficients(
    step: &StepParams,
    x: f64,
    y: f64,
    t: f64,
) -> Result<Coefficients, BacklundError> {
    let e11 = phase(step.m1, x, y)?.scale(step.f11.at(t));
    let e12 = phase(step.m1p, x, y)?.scale(step.f12.at(t));
    let e21 = phase(step.m2, x, y)?.scale(step.f21.at(t));
    let e22 = phase(step.m2p, x, y)?.scale(step.f22.at(t));
    let l2 = step.lambda * step.lambda;
    let lp2 = step.lambda_p * step.lambda_p;
    let gap = l2 - lp2;
    let (a, b) = (step.a, step.b);
    let over = lp2.inv();
    Ok(Coefficients {
        r: e11.scale(-b),
        rp: (e11.scale(l2 * a) + e12.scale(gap * b)).scale(over),
        m: (e11.scale(-gap * a) - e12.scale(l2 * b)).scale(over),
        mp: e12.scale(a),
        l: e21.scale(-b),
        lp: (e21.scale(l2 * a) + e22.scale(gap * b)).scale(over),
        n: (e21.scale(-gap * a) - e22.scale(l2 * b)).scale(over),
        np: e22.scale(a),
        f: e11.scale(a) + e12.scale(b),
        fp: e21.scale(a) + e22.scale(b),
        fblock: Mat2Jet::new(e11, e12, e21, e22),
    })
}

/// Where a step is being evaluated; used for error reports.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    fn vanishing(&self) -> BacklundError {
        BacklundError::VanishingDenominator {
            step: self.step,
            x: self.x,
            y: self.y,
            t: self.t,
        }
    }
}

/// `Q_l`, `P_l` of one step at one point, with jets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepQP {
    pub q: Mat2Jet,
    pub p: Mat2Jet,
    pub lambda: CScalar,
    pub lambda_p: CScalar,
}

/// `2λ_l/(λ² − λ_l²)`, refusing λ within the guard of ±λ_l.
pub fn pole_factor(lambda_l: CScalar, lambda: CScalar) -> Result<CScalar, BacklundError> {
    let l2 = lambda_l * lambda_l;
    let gap = lambda * lambda - l2;
    if !(gap.norm() >= POLE_GUARD * l2.norm()) {
        return Err(BacklundError::OnPole { lambda });
    }
    Ok(2.0 * lambda_l / gap)
}

/// Closed-form `Q_l`, `P_l` from `Φ_{l−1}(λ_l)`.
pub fn build_qp(
    step: &StepParams,
    phi_prev_at_pole: &Mat2Jet,
    coeffs: &Coefficients,
    at: Point,
) -> Result<StepQP, BacklundError> {
    let s = sigma(step)?;
    let u = phi_prev_at_pole.m[1][0];
    let v = phi_prev_at_pole.m[1][1];
    let au = v.scale(step.a);
    let bu = u.scale(step.b);
    let d = au - bu;
    let scale = au.val.norm() + bu.val.norm();
    if !(d.val.norm() > 1e-13 * scale) || !d.val.is_finite() {
        return Err(at.vanishing());
    }
    let dinv = d.recip();
    let k = &coeffs;
    let q = Mat2Jet::new(
        (k.r * u + k.rp * v) * dinv,
        (k.m * u + k.mp * v) * dinv,
        (k.l * u + k.lp * v) * dinv,
        (k.n * u + k.np * v) * dinv,
    );
    let ps = dinv.scale(s.inv());
    let p = Mat2Jet::new(
        -(k.f * v * ps),
        k.f * u * ps,
        -(k.fp * v * ps),
        k.fp * u * ps,
    );
    if !q.is_finite() || !p.is_finite() {
        return Err(at.vanishing());
    }
    Ok(StepQP {
        q,
        p,
        lambda: step.lambda,
        lambda_p: step.lambda_p,
    })
}

/// `B_l(λ) = Q + 2λ_l/(λ²−λ_l²)·P`.
pub fn bt_matrix(
    q: &Mat2,
    p: &Mat2,
    lambda_l: CScalar,
    lambda: CScalar,
) -> Result<Mat2, BacklundError> {
    Ok(*q + p.scale(pole_factor(lambda_l, lambda)?))
}

impl StepQP {
    pub fn b_matrix(&self, lambda: CScalar) -> Result<Mat2, BacklundError> {
        bt_matrix(&self.q.value(), &self.p.value(), self.lambda, lambda)
    }

    pub fn b_matrix_jet(&self, lambda: CScalar) -> Result<Mat2Jet, BacklundError> {
        let c = pole_factor(self.lambda, lambda)?;
        Ok(self.q + self.p.scale(Jet::constant(c)))
    }

    pub fn inverse(&self) -> Result<InverseStep, BacklundError> {
        InverseStep::from_qp(&self.q.value(), &self.p.value(), self.lambda, self.lambda_p)
    }
}

/// `B_l⁻¹(λ) = Q' + 2λ'_l/(λ²−λ'_l²)·P'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseStep {
    pub qp: Mat2,
    pub pp: Mat2,
    pub lambda_p: CScalar,
}

impl InverseStep {
    /// Exact inverse for a step whose determinant is
    /// `det Q·(λ²−λ'²)/(λ²−λ_l²)`: `Q' = Q⁻¹` and
    /// `P' = [adj Q·(λ'²−λ_l²) + 2λ_l adj P] / (2λ' det Q)`.
    pub fn from_qp(
        q: &Mat2,
        p: &Mat2,
        lambda: CScalar,
        lambda_p: CScalar,
    ) -> Result<Self, BacklundError> {
        let (l2, lp2) = check_poles(lambda, lambda_p)?;
        let qinv = q.inv()?;
        let num = q.adjugate().scale(lp2 - l2) + p.adjugate().scale(2.0 * lambda);
        Ok(InverseStep {
            qp: qinv,
            pp: num.scale((2.0 * lambda_p * q.det()).inv()),
            lambda_p,
        })
    }

    pub fn evaluate(&self, lambda: CScalar) -> Result<Mat2, BacklundError> {
        Ok(self.qp + self.pp.scale(pole_factor(self.lambda_p, lambda)?))
    }
}

fn rel(num: f64, a: f64, b: f64) -> f64 {
    let d = a * b;
    if d == 0.0 {
        num
    } else {
        num / d
    }
}

/// Relative residuals of the four kernel conditions, in the order
/// `B(λ')P'`, `P B⁻¹(λ_l)`, `B⁻¹(λ_l) P`, `P' B(λ')`.
pub fn annihilation_residuals(
    q: &Mat2,
    p: &Mat2,
    lambda: CScalar,
    inv: &InverseStep,
) -> Result<[f64; 4], BacklundError> {
    // B(λ') and B⁻¹(λ_l) are finite: each is evaluated away from its own pole.
    let b_at_lp = bt_matrix(q, p, lambda, inv.lambda_p)?;
    let binv_at_l = inv.evaluate(lambda)?;
    Ok([
        rel((b_at_lp * inv.pp).norm(), b_at_lp.norm(), inv.pp.norm()),
        rel((*p * binv_at_l).norm(), p.norm(), binv_at_l.norm()),
        rel((binv_at_l * *p).norm(), binv_at_l.norm(), p.norm()),
        rel((inv.pp * b_at_lp).norm(), inv.pp.norm(), b_at_lp.norm()),
    ])
}

/// Result of the linear-algebra construction of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSolution {
    pub q: Mat2,
    pub p: Mat2,
    pub qp: Mat2,
    pub pp: Mat2,
    pub cond: f64,
}

/// Spectral samples used to recover `Q'`, `P'` from `B(λ)B⁻¹(λ) = I`,
/// expressed as multiples of `λ_l`.
const ORACLE_SAMPLES: [(f64, f64); 3] = [(1.37, 0.41), (0.53, -0.88), (2.11, 0.23)];

fn cond_number(m: &DMatrix<CScalar>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Builds `Q, P` from the linear conditions
///
/// * `Q − (2/λ_l)P = F-block` (value of `B` at λ = 0),
/// * `P·(Φ²¹, Φ²²)ᵀ = 0` with Φ = `Φ_{l−1}(λ_l)`,
/// * `B(λ'_l)·(a_l, b_l)ᵀ = 0`,
///
/// then `Q', P'` by least squares from `B(λ_k)B⁻¹(λ_k) = I` at three
/// spectral samples.
pub fn solve_qp_oracle(
    step: &StepParams,
    phi_prev_at_pole: &Mat2,
    fblock: &Mat2,
) -> Result<OracleSolution, BacklundError> {
    step.validate()?;
    let lam = step.lambda;
    let lamp = step.lambda_p;
    let u = phi_prev_at_pole.m[1][0];
    let v = phi_prev_at_pole.m[1][1];
    let cp = pole_factor(lam, lamp)?;
    let z = re(0.0);
    let one = re(1.0);
    let k2 = -2.0 / lam;
    // unknowns: Q11 Q12 Q21 Q22 P11 P12 P21 P22
    #[rustfmt::skip]
    let rows: [[CScalar; 8]; 8] = [
        [one, z, z, z, k2, z, z, z],
        [z, one, z, z, z, k2, z, z],
        [z, z, one, z, z, z, k2, z],
        [z, z, z, one, z, z, z, k2],
        [z, z, z, z, u, v, z, z],
        [z, z, z, z, z, z, u, v],
        [step.a, step.b, z, z, cp * step.a, cp * step.b, z, z],
        [z, z, step.a, step.b, z, z, cp * step.a, cp * step.b],
    ];
    let a = DMatrix::from_fn(8, 8, |i, j| rows[i][j]);
    let f = fblock;
    let rhs = DVector::from_vec(vec![f.m[0][0], f.m[0][1], f.m[1][0], f.m[1][1], z, z, z, z]);
    let cond = cond_number(&a);
    if !(cond <= ORACLE_COND_LIMIT) {
        return Err(BacklundError::IllConditioned { cond });
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or(BacklundError::IllConditioned { cond })?;
    let q = Mat2::new(sol[0], sol[1], sol[2], sol[3]);
    let p = Mat2::new(sol[4], sol[5], sol[6], sol[7]);

    // B(λ_k)·(Q' + c_k P') = I, unknowns Q'11..Q'22 P'11..P'22.
    let mut lhs = DMatrix::<CScalar>::zeros(12, 8);
    let mut rhs = DVector::<CScalar>::zeros(12);
    for (s, (sr, si)) in ORACLE_SAMPLES.iter().enumerate() {
        let lk = lam * CScalar::new(*sr, *si);
        let b = bt_matrix(&q, &p, lam, lk)?;
        let ck = pole_factor(lamp, lk)?;
        for i in 0..2 {
            for j in 0..2 {
                let row = 4 * s + 2 * i + j;
                for kk in 0..2 {
                    // (B X)_{ij} = Σ_k B_ik X_kj
                    lhs[(row, 2 * kk + j)] += b.m[i][kk];
                    lhs[(row, 4 + 2 * kk + j)] += b.m[i][kk] * ck;
                }
                rhs[row] = if i == j { one } else { z };
            }
        }
    }
    let cond2 = cond_number(&lhs);
    if !(cond2 <= ORACLE_COND_LIMIT) {
        return Err(BacklundError::IllConditioned { cond: cond2 });
    }
    let svd = lhs.svd(true, true);
    let x = svd
        .solve(&rhs, 1e-14)
        .map_err(|_| BacklundError::IllConditioned { cond: cond2 })?;
    Ok(OracleSolution {
        q,
        p,
        qp: Mat2::new(x[0], x[1], x[2], x[3]),
        pp: Mat2::new(x[4], x[5], x[6], x[7]),
        cond: cond.max(cond2),
    })
}

/// Which denominator to use in the closed form of `Φ_l¹¹(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi11Denominator {
    /// `a_lΦ²¹(λ_l) − b_lΦ²²(λ_l)` as displayed next to the `Φ¹¹` formula.
    Displayed,
    /// `a_lΦ²²(λ_l) − b_lΦ²¹(λ_l)`, the denominator of the `Q`/`P` entries.
    QBlock,
}

/// `Φ_l¹¹(λ) = N_l/D_l` with
/// `N_l = R Φ²¹_p Φ¹¹ + (R' − f(λ)F) Φ²²_p Φ¹¹ + (M + f(λ)F) Φ²¹_p Φ²¹ + M' Φ²²_p Φ²¹`
/// where the subscript `p` marks evaluation at `λ_l` and
/// `f(λ) = 2λ_l/(σ_l(λ²−λ_l²))`.
pub fn phi11_closed_form(
    step: &StepParams,
    coeffs: &Coefficients,
    phi_prev_at_pole: &Mat2,
    phi_prev: &Mat2,
    lambda: CScalar,
    denominator: Phi11Denominator,
) -> Result<CScalar, BacklundError> {
    let s = sigma(step)?;
    let fl = pole_factor(step.lambda, lambda)? / s;
    let (u, v) = (phi_prev_at_pole.m[1][0], phi_prev_at_pole.m[1][1]);
    let (p11, p21) = (phi_prev.m[0][0], phi_prev.m[1][0]);
    let k = coeffs;
    let num = k.r.val * u * p11
        + (k.rp.val - fl * k.f.val) * v * p11
        + (k.m.val + fl * k.f.val) * u * p21
        + k.mp.val * v * p21;
    let den = match denominator {
        Phi11Denominator::Displayed => step.a * u - step.b * v,
        Phi11Denominator::QBlock => step.a * v - step.b * u,
    };
    Ok(num / den)
}

/// Transcription of the displayed upper-triangular `B_l(λ)` of the reduced
/// case, with `θ_{l−1} = Φ²¹_{l−1}(λ_l)/Φ²²_{l−1}(λ_l)`. The (2,2) exponent
/// uses `m2p`, the constant of `F²²`.
pub fn reduced_bt_matrix(
    step: &StepParams,
    theta_prev: CScalar,
    x: f64,
    y: f64,
    t: f64,
    lambda: CScalar,
) -> Result<Mat2, BacklundError> {
    let l2 = step.lambda * step.lambda;
    let lp2 = step.lambda_p * step.lambda_p;
    let gap = lambda * lambda - l2;
    if !(gap.norm() >= POLE_GUARD * l2.norm()) {
        return Err(BacklundError::OnPole { lambda });
    }
    let rho = l2 / lp2;
    let e11 = step.f11.at(t) * (I * step.m1 * (x - y)).exp();
    let e22 = step.f22.at(t) * (I * step.m2p * (x - y)).exp();
    Ok(Mat2::new(
        rho * (1.0 - (lp2 - l2) / gap) * e11,
        (1.0 + l2 / gap) * (1.0 - rho) * e11 * theta_prev,
        re(0.0),
        e22,
    ))
}

/// Per-point memo of a chain: `Φ_{l−1}(λ_l)`, the coefficients and
/// `Q_l, P_l` for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub phi_at_poles: Vec<Mat2Jet>,
    pub coeffs: Vec<Coefficients>,
    pub steps: Vec<StepQP>,
    seed: SeedParams,
}

impl ChainPoint {
    /// `Φ_depth(λ)` at this point, `depth ≤ number of steps`.
    pub fn eigenfunction(&self, lambda: CScalar, depth: usize) -> Result<Mat2Jet, BacklundError> {
        let mut phi = seed_eigenfunction(&self.seed, lambda, self.x, self.y, self.t)?;
        for st in &self.steps[..depth] {
            phi = st.b_matrix_jet(lambda)? * phi;
        }
        Ok(phi)
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }
}

/// Seed plus an ordered list of dressing steps; evaluates `Φ_n(x, y, t, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenEvaluator {
    seed: SeedParams,
    steps: Vec<StepParams>,
}

impl EigenEvaluator {
    pub fn new(seed: SeedParams) -> Result<Self, BacklundError> {
        seed.validate()?;
        Ok(EigenEvaluator {
            seed,
            steps: Vec::new(),
        })
    }

    pub fn with_steps(seed: SeedParams, steps: &[StepParams]) -> Result<Self, BacklundError> {
        steps
            .iter()
            .try_fold(EigenEvaluator::new(seed)?, |ev, s| ev.apply_step(*s))
    }

    /// Appends one dressing step.
    pub fn apply_step(&self, step: StepParams) -> Result<Self, BacklundError> {
        step.validate()?;
        if self.steps.len() >= MAX_DEPTH {
            return Err(BacklundError::TooDeep(self.steps.len() + 1));
        }
        let mut out = self.clone();
        out.steps.push(step);
        Ok(out)
    }

    pub fn seed(&self) -> &SeedParams {
        &self.seed
    }

    pub fn steps(&self) -> &[StepParams] {
        &self.steps
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    /// Evaluator truncated to the first `depth` steps.
    pub fn truncated(&self, depth: usize) -> Self {
        EigenEvaluator {
            seed: self.seed,
            steps: self.steps[..depth.min(self.steps.len())].to_vec(),
        }
    }

    pub fn chain_point(&self, x: f64, y: f64, t: f64) -> Result<ChainPoint, BacklundError> {
        let mut cp = ChainPoint {
            x,
            y,
            t,
            phi_at_poles: Vec::with_capacity(self.steps.len()),
            coeffs: Vec::with_capacity(self.steps.len()),
            steps: Vec::with_capacity(self.steps.len()),
            seed: self.seed,
        };
        for (l, step) in self.steps.iter().enumerate() {
            let at = Point {
                step: l + 1,
                x,
                y,
                t,
            };
            let phi_pole = cp.eigenfunction(step.lambda, l).map_err(|e| match e {
                BacklundError::Algebra(AlgebraError::SingularMatrix { .. }) => at.vanishing(),
                other => other,
            })?;
            let coeffs = coefficients(step, x, y, t)?;
            let qp = build_qp(step, &phi_pole, &coeffs, at)?;
            cp.phi_at_poles.push(phi_pole);
            cp.coeffs.push(coeffs);
            cp.steps.push(qp);
        }
        Ok(cp)
    }

    pub fn evaluate(
        &self,
        x: f64,
        y: f64,
        t: f64,
        lambda: CScalar,
    ) -> Result<Mat2Jet, BacklundError> {
        self.chain_point(x, y, t)?
            .eigenfunction(lambda, self.steps.len())
    }
}
