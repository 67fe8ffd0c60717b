//! Physical fields generated by the dressing chain.
//!
//! `q_n`, `r_n` follow from the recursion
//! `q_n = −2Q¹²_{n,x}/Q²²_n + (Q¹¹_n/Q²²_n) q_{n−1}` and its mirror for `r_n`.
//! The potentials `A1`, `A2` are recovered from `A_{1x} = −½(q_y r + r_y q)`
//! and `A_{2y} = −½(q_x r + r_x q)` by cumulative trapezoidal quadrature.

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{re, CScalar, Mat2Jet, I};
use crate::backlund::{BacklundError, ChainPoint, EigenEvaluator, StepParams, TimeCoeff};
use crate::laxpair::{SeedParams, SpectralValue};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FieldsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("vanishing denominator in the field recursion")]
    VanishingDenominator,
    #[error(
        "vanishing denominator in the field recursion at step {step}, (x, y, t) = ({x}, {y}, {t})"
    )]
    VanishingAt { step: usize, x: f64, y: f64, t: f64 },
    #[error("quadrature produced non-finite potentials")]
    QuadratureUnstable,
    #[error("compact formula needs reduced steps (b = 0, f12 = f21 = 0): {0}")]
    NotReduced(&'static str),
    #[error(transparent)]
    Backlund(#[from] BacklundError),
}

/// Uniform rectangular grid at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
    pub t: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), FieldsError> {
        if self.nx < 4 || self.ny < 4 {
            return Err(FieldsError::InvalidGrid("nx and ny must be at least 4"));
        }
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max, self.t]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(FieldsError::InvalidGrid("non-finite bounds"));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(FieldsError::InvalidGrid("empty domain"));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy()
    }

    /// Row-major index, `y` outer.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at_time(&self, t: f64) -> GridSpec {
        GridSpec { t, ..*self }
    }

    /// Same window with `factor` times as many intervals per axis.
    pub fn refined(&self, factor: usize) -> GridSpec {
        GridSpec {
            nx: (self.nx - 1) * factor + 1,
            ny: (self.ny - 1) * factor + 1,
            ..*self
        }
    }

    /// Node coordinates in storage order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        (0..self.ny)
            .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
            .map(|(i, j)| (self.x(i), self.y(j)))
            .collect()
    }
}

/// Sampled `q, r, A1, A2` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub q: Vec<CScalar>,
    pub r: Vec<CScalar>,
    pub a1: Vec<CScalar>,
    pub a2: Vec<CScalar>,
    pub n_steps: usize,
}

/// First derivatives of `q`, `r` on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDerivatives {
    pub q_x: Vec<CScalar>,
    pub q_y: Vec<CScalar>,
    pub r_x: Vec<CScalar>,
    pub r_y: Vec<CScalar>,
}

fn check_den(d: CScalar) -> Result<CScalar, FieldsError> {
    if d.norm() == 0.0 || !d.is_finite() {
        return Err(FieldsError::VanishingDenominator);
    }
    Ok(d)
}

/// `q_n = −2Q¹²_x/Q²² + (Q¹¹/Q²²) q_{n−1}`
pub fn next_q(qjet: &Mat2Jet, q_prev: CScalar) -> Result<CScalar, FieldsError> {
    let d = check_den(qjet.m[1][1].val)?;
    Ok((-2.0 * qjet.m[0][1].dx + qjet.m[0][0].val * q_prev) / d)
}

/// `r_n = −2Q²¹_y/Q¹¹ + (Q²²/Q¹¹) r_{n−1}`
pub fn next_r(qjet: &Mat2Jet, r_prev: CScalar) -> Result<CScalar, FieldsError> {
    let d = check_den(qjet.m[0][0].val)?;
    Ok((-2.0 * qjet.m[1][0].dy + qjet.m[1][1].val * r_prev) / d)
}

/// `q_k`, `r_k` for `k = 0..=depth` at one chain point.
pub fn point_fields(
    cp: &ChainPoint,
    seed: &SeedParams,
) -> Result<Vec<(CScalar, CScalar)>, FieldsError> {
    let mut out = Vec::with_capacity(cp.depth() + 1);
    let (mut q, mut r) = (seed.q0, seed.r0);
    out.push((q, r));
    for (l, st) in cp.steps.iter().enumerate() {
        let tag = |e| match e {
            FieldsError::VanishingDenominator => FieldsError::VanishingAt {
                step: l + 1,
                x: cp.x,
                y: cp.y,
                t: cp.t,
            },
            other => other,
        };
        q = next_q(&st.q, q).map_err(tag)?;
        r = next_r(&st.q, r).map_err(tag)?;
        out.push((q, r));
    }
    Ok(out)
}

/// `(q_n, r_n)` at a point for the full chain of `ev`.
pub fn fields_at(
    ev: &EigenEvaluator,
    x: f64,
    y: f64,
    t: f64,
) -> Result<(CScalar, CScalar), FieldsError> {
    let cp = ev.chain_point(x, y, t)?;
    Ok(*point_fields(&cp, ev.seed())?
        .last()
        .expect("depth 0 always present"))
}

/// Step used for the pointwise derivatives of `q`, `r`.
pub fn derivative_step(x: f64) -> f64 {
    1e-3 * (1.0 + x.abs())
}

/// `(q, r, q_x, q_y, r_x, r_y)` of the full chain at a point; the
/// derivatives come from fourth-order central differences of the pointwise
/// recursion.
pub fn fields_with_derivatives(
    ev: &EigenEvaluator,
    x: f64,
    y: f64,
    t: f64,
) -> Result<[CScalar; 6], FieldsError> {
    let (q, r) = fields_at(ev, x, y, t)?;
    if ev.depth() == 0 {
        let z = re(0.0);
        return Ok([q, r, z, z, z, z]);
    }
    let hx = derivative_step(x);
    let hy = derivative_step(y);
    let d = |dx: f64, dy: f64, h: f64| -> Result<(CScalar, CScalar), FieldsError> {
        let mut acc = [re(0.0); 2];
        for (w, o) in [(1.0, -2.0), (-8.0, -1.0), (8.0, 1.0), (-1.0, 2.0)] {
            let (qq, rr) = fields_at(ev, x + o * dx, y + o * dy, t)?;
            acc[0] += qq * w;
            acc[1] += rr * w;
        }
        Ok((acc[0] / (12.0 * h), acc[1] / (12.0 * h)))
    };
    let (q_x, r_x) = d(hx, 0.0, hx)?;
    let (q_y, r_y) = d(0.0, hy, hy)?;
    Ok([q, r, q_x, q_y, r_x, r_y])
}

/// Cumulative trapezoidal reconstruction of `A1` (along x from `x_min`) and
/// `A2` (along y from `y_min`).
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_potentials(
    q: &[CScalar],
    r: &[CScalar],
    derivs: &FieldDerivatives,
    spec: &GridSpec,
    a10: CScalar,
    a20: CScalar,
) -> Result<(Vec<CScalar>, Vec<CScalar>), FieldsError> {
    spec.validate()?;
    let n = spec.len();
    if [q.len(), r.len(), derivs.q_x.len(), derivs.r_y.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(FieldsError::InvalidGrid("field length does not match grid"));
    }
    let g1: Vec<CScalar> = (0..n)
        .map(|k| -0.5 * (derivs.q_y[k] * r[k] + derivs.r_y[k] * q[k]))
        .collect();
    let g2: Vec<CScalar> = (0..n)
        .map(|k| -0.5 * (derivs.q_x[k] * r[k] + derivs.r_x[k] * q[k]))
        .collect();
    let (hx, hy) = (spec.hx(), spec.hy());
    let mut a1 = vec![a10; n];
    let mut a2 = vec![a20; n];
    for j in 0..spec.ny {
        for i in 1..spec.nx {
            let (k, km) = (spec.index(i, j), spec.index(i - 1, j));
            a1[k] = a1[km] + 0.5 * hx * (g1[km] + g1[k]);
        }
    }
    for i in 0..spec.nx {
        for j in 1..spec.ny {
            let (k, km) = (spec.index(i, j), spec.index(i, j - 1));
            a2[k] = a2[km] + 0.5 * hy * (g2[km] + g2[k]);
        }
    }
    if a1.iter().chain(a2.iter()).any(|v| !v.is_finite()) {
        return Err(FieldsError::QuadratureUnstable);
    }
    Ok((a1, a2))
}

/// Full recursion on every node plus reconstructed potentials, together with
/// the nodal derivatives of `q`, `r`.
pub fn chain_fields_with_derivatives(
    ev: &EigenEvaluator,
    spec: &GridSpec,
) -> Result<(FieldGrid, FieldDerivatives), FieldsError> {
    spec.validate()?;
    let nodes = spec.nodes();
    let vals: Vec<[CScalar; 6]> = nodes
        .par_iter()
        .map(|&(x, y)| fields_with_derivatives(ev, x, y, spec.t))
        .collect::<Result<_, _>>()?;
    let col = |k: usize| vals.iter().map(|v| v[k]).collect::<Vec<_>>();
    let (q, r) = (col(0), col(1));
    let derivs = FieldDerivatives {
        q_x: col(2),
        q_y: col(3),
        r_x: col(4),
        r_y: col(5),
    };
    let seed = ev.seed();
    let (a1, a2) = reconstruct_potentials(&q, &r, &derivs, spec, seed.a10, seed.a20)?;
    Ok((
        FieldGrid {
            spec: *spec,
            q,
            r,
            a1,
            a2,
            n_steps: ev.depth(),
        },
        derivs,
    ))
}

pub fn chain_fields(
    seed: &SeedParams,
    steps: &[StepParams],
    spec: &GridSpec,
) -> Result<FieldGrid, FieldsError> {
    let ev = EigenEvaluator::with_steps(*seed, steps)?;
    Ok(chain_fields_with_derivatives(&ev, spec)?.0)
}

/// One-step composite `q_1 = −2Q¹²_{1x}/Q²²_1 + (Q¹¹_1/Q²²_1) q0`.
pub fn q1_composite(q1: &Mat2Jet, q0: CScalar) -> CScalar {
    -2.0 * q1.m[0][1].dx / q1.m[1][1].val + q1.m[0][0].val / q1.m[1][1].val * q0
}

pub fn r1_composite(q1: &Mat2Jet, r0: CScalar) -> CScalar {
    -2.0 * q1.m[1][0].dy / q1.m[0][0].val + q1.m[1][1].val / q1.m[0][0].val * r0
}

/// Two-step composite
/// `q_2 = −2Q¹²_{2x}/Q²²_2 − 2Q¹¹_2Q¹²_{1x}/(Q²²_2Q²²_1) + Q¹¹_2Q¹¹_1 q0/(Q²²_2Q²²_1)`.
pub fn q2_composite(q2: &Mat2Jet, q1: &Mat2Jet, q0: CScalar) -> CScalar {
    let (a, b) = (q2.m[0][0].val, q2.m[1][1].val);
    let (c1, d1) = (q1.m[0][0].val, q1.m[1][1].val);
    -2.0 * q2.m[0][1].dx / b - 2.0 * a * q1.m[0][1].dx / (b * d1) + a * c1 / (b * d1) * q0
}

pub fn r2_composite(q2: &Mat2Jet, q1: &Mat2Jet, r0: CScalar) -> CScalar {
    let (a, b) = (q2.m[0][0].val, q2.m[1][1].val);
    let (a1, b1) = (q1.m[0][0].val, q1.m[1][1].val);
    -2.0 * q2.m[1][0].dy / a - 2.0 * b * q1.m[1][0].dy / (a * a1) + b * b1 / (a * a1) * r0
}

/// Exponent constant used in the `Q²²` factors of the product formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum M2Reading {
    /// `m'_2` everywhere (the constant of `F²²`).
    FBlock,
    /// `m'_{2,n}` in the leading denominator, unprimed `m_2` elsewhere.
    AsPrinted,
}

/// Coefficient multiplying `Q¹²_l` in the product formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbarReading {
    /// `m̄_l = m̄0 + i m_{1l}`, the x-rate of `Q¹²_l`.
    PlusIm,
    /// `m̄_l = m̄0 − i m_{1l}`, by analogy with `m̄'_l = −i m_{1l} + m̄'_0`.
    MinusIm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompactReading {
    pub m2: M2Reading,
    pub mbar: MbarReading,
}

impl Default for CompactReading {
    fn default() -> Self {
        CompactReading {
            m2: M2Reading::FBlock,
            mbar: MbarReading::PlusIm,
        }
    }
}

impl CompactReading {
    pub fn all() -> [CompactReading; 4] {
        let mut out = [CompactReading::default(); 4];
        let mut k = 0;
        for m2 in [M2Reading::FBlock, M2Reading::AsPrinted] {
            for mbar in [MbarReading::PlusIm, MbarReading::MinusIm] {
                out[k] = CompactReading { m2, mbar };
                k += 1;
            }
        }
        out
    }
}

/// Reduced-step data entering the product formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactStep {
    pub lambda: CScalar,
    pub lambda_p: CScalar,
    pub f11: TimeCoeff,
    pub f22: TimeCoeff,
    pub m1: CScalar,
    pub m2: CScalar,
    pub m2p: CScalar,
    /// Time rate of `Q¹²_l`.
    pub delta: CScalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactParams {
    pub steps: Vec<CompactStep>,
    pub q0: CScalar,
    pub m0: CScalar,
    pub n0: CScalar,
    /// `m̄0 = a(m0 − n0)`
    pub mbar0: CScalar,
    /// `m̄'0 = b(1/m0 − 1/n0)`
    pub mbar0p: CScalar,
}

/// Time rate of `Φ²¹_0(λ)/Φ²²_0(λ)`, fitted from two time samples at the
/// origin.
pub fn fit_delta(seed: &SeedParams, lambda: CScalar) -> Result<CScalar, FieldsError> {
    let tau = 1e-2;
    let ratio = |t: f64| -> Result<CScalar, FieldsError> {
        let phi = crate::laxpair::seed_eigenfunction(seed, lambda, 0.0, 0.0, t)
            .map_err(BacklundError::from)?;
        let v = phi.value();
        Ok(v.m[1][0] / v.m[1][1])
    };
    Ok((ratio(tau)? / ratio(0.0)?).ln() / tau)
}

impl CompactParams {
    /// Collects the product-formula data from a seed and reduced steps.
    /// `delta_overrides[l]`, when present, replaces the fitted rate of step l.
    pub fn from_steps(
        seed: &SeedParams,
        steps: &[StepParams],
        delta_overrides: &[Option<CScalar>],
    ) -> Result<Self, FieldsError> {
        seed.validate().map_err(BacklundError::from)?;
        let mut out = Vec::with_capacity(steps.len());
        for (l, st) in steps.iter().enumerate() {
            st.validate()?;
            if !st.is_reduced() {
                return Err(FieldsError::NotReduced(
                    "step has b != 0 or nonzero f12/f21",
                ));
            }
            let delta = match delta_overrides.get(l).copied().flatten() {
                Some(d) => d,
                None => fit_delta(seed, st.lambda)?,
            };
            out.push(CompactStep {
                lambda: st.lambda,
                lambda_p: st.lambda_p,
                f11: st.f11,
                f22: st.f22,
                m1: st.m1,
                m2: st.m2,
                m2p: st.m2p,
                delta,
            });
        }
        Ok(CompactParams {
            steps: out,
            q0: seed.q0,
            m0: seed.m0,
            n0: seed.n0,
            mbar0: seed.a * (seed.m0 - seed.n0),
            mbar0p: seed.b * (seed.m0.inv() - seed.n0.inv()),
        })
    }

    fn step(&self, l: usize) -> &CompactStep {
        &self.steps[l - 1]
    }

    /// `T_l = (m0/n0)(1 − λ_l²/λ'_l²)`
    pub fn t_factor(&self, l: usize) -> CScalar {
        let s = self.step(l);
        self.m0 / self.n0 * (1.0 - (s.lambda * s.lambda) / (s.lambda_p * s.lambda_p))
    }

    /// `Q¹²_l = T_l f¹¹_l(t) e^{i m_{1l} x} e^{m̄0 x + m̄'_l y + δ_l t}`
    pub fn q12(&self, l: usize, x: f64, y: f64, t: f64) -> CScalar {
        let s = self.step(l);
        let mbar_p = -I * s.m1 + self.mbar0p;
        self.t_factor(l)
            * s.f11.at(t)
            * (I * s.m1 * x + self.mbar0 * x + mbar_p * y + s.delta * t).exp()
    }

    fn mbar(&self, l: usize, reading: MbarReading) -> CScalar {
        let m1 = self.step(l).m1;
        match reading {
            MbarReading::PlusIm => self.mbar0 + I * m1,
            MbarReading::MinusIm => self.mbar0 - I * m1,
        }
    }

    /// `A^n_K = Π_{l=1}^{K} λ²_{n−l+1}/λ'²_{n−l+1}`
    fn a_prod(&self, n: usize, k: usize) -> CScalar {
        (1..=k)
            .map(|l| {
                let s = self.step(n - l + 1);
                (s.lambda * s.lambda) / (s.lambda_p * s.lambda_p)
            })
            .product()
    }

    /// `F^n_K(t) = Π f¹¹_{n−l+1}(t)`
    fn f_prod(&self, n: usize, k: usize, t: f64) -> CScalar {
        (1..=k).map(|l| self.step(n - l + 1).f11.at(t)).product()
    }

    /// `G^n_K(t) = Π f²²_{n−l+1}(t)`
    fn g_prod(&self, n: usize, k: usize, t: f64) -> CScalar {
        (1..=k).map(|l| self.step(n - l + 1).f22.at(t)).product()
    }

    fn m1_sum(&self, n: usize, k: usize) -> CScalar {
        (1..=k).map(|j| self.step(n - j + 1).m1).sum()
    }

    fn m2_sum(&self, n: usize, k: usize, reading: M2Reading) -> CScalar {
        (1..=k)
            .map(|j| {
                let s = self.step(n - j + 1);
                match reading {
                    M2Reading::FBlock => s.m2p,
                    M2Reading::AsPrinted => s.m2,
                }
            })
            .sum()
    }
}

/// Closed product formula for `q_n` in the reduced case.
pub fn compact_q(
    cp: &CompactParams,
    n: usize,
    x: f64,
    y: f64,
    t: f64,
    reading: CompactReading,
) -> Result<CScalar, FieldsError> {
    if n == 0 || n > cp.steps.len() {
        return Err(FieldsError::NotReduced(
            "depth must be between 1 and the number of steps",
        ));
    }
    let w = x - y;
    let lead_m2 = cp.step(n).m2p;
    let mut q = -2.0 * cp.mbar(n, reading.mbar) * cp.q12(n, x, y, t)
        / (cp.g_prod(n, 1, t) * (I * lead_m2 * w).exp());
    for k in 1..n {
        let num = cp.a_prod(n, k) * cp.f_prod(n, k, t) * (I * cp.m1_sum(n, k) * w).exp();
        let den = cp.g_prod(n, k + 1, t) * (I * cp.m2_sum(n, k + 1, reading.m2) * w).exp();
        q -= 2.0 * num / den * cp.mbar(n - k, reading.mbar) * cp.q12(n - k, x, y, t);
    }
    let num = cp.a_prod(n, n) * cp.f_prod(n, n, t) * (I * cp.m1_sum(n, n) * w).exp();
    let den = cp.g_prod(n, n, t) * (I * cp.m2_sum(n, n, reading.m2) * w).exp();
    q += num / den * cp.q0;
    if !q.is_finite() {
        return Err(FieldsError::VanishingDenominator);
    }
    Ok(q)
}

/// `ξ1(λ) − ξ2(λ)` of the seed, the analytic counterpart of [`fit_delta`].
pub fn seed_delta(seed: &SeedParams, lambda: CScalar) -> Result<CScalar, FieldsError> {
    let sv = SpectralValue::new(lambda).map_err(BacklundError::from)?;
    let [c1, c2] = seed.exponents(sv);
    Ok(c1.xi - c2.xi)
}
