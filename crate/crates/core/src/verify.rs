//! Verification harness: PDE residuals, Lax residuals along the chain,
//! algebraic identities of each step and finite-difference checks of the
//! analytic jets.
//!
//! Every check produces a [`ResidualReport`]; `pass` is always
//! `linf <= tolerance_used`.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{re, CScalar, Mat2, I};
use crate::backlund::{
    annihilation_residuals, BacklundError, EigenEvaluator, InverseStep, OracleSolution, StepQP,
};
use crate::fields::{fields_with_derivatives, FieldGrid, FieldsError, GridSpec};
use crate::laxpair::{
    build_u_sv, spatial_lax_residual, time_lax_residual, LaxError, LocalFields, PhiStencil,
    SpectralValue, StencilSteps,
};

/// Algebraic identities (transcription errors show up here).
pub const TOL_ALGEBRAIC: f64 = 1e-10;
/// Analytic jets against finite differences.
pub const TOL_JET: f64 = 1e-8;
/// Finite-difference PDE residuals.
pub const TOL_PDE: f64 = 1e-5;
/// `‖B(λ) − B(−λ)‖` relative to `‖B(λ)‖`.
pub const TOL_PARITY: f64 = 1e-15;
/// `|det P|` relative to `‖P‖²`.
pub const TOL_RANK_ONE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum VerifyError {
    #[error("grid too small for the residual stencils")]
    GridTooSmall,
    #[error("fields do not match the requested grid")]
    GridMismatch,
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Backlund(#[from] BacklundError),
    #[error(transparent)]
    Lax(#[from] LaxError),
}

/// Tolerances used by the suites. Defaults are the module constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub algebraic: f64,
    pub jet: f64,
    pub pde: f64,
    pub lax_spatial: f64,
    pub lax_time: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            algebraic: TOL_ALGEBRAIC,
            jet: TOL_JET,
            pde: TOL_PDE,
            lax_spatial: 1e-6,
            lax_time: 1e-6,
        }
    }
}

/// `(x, y, residual)`
type Sample = (f64, f64, f64);

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub name: String,
    pub linf: f64,
    /// Root mean square over the sampled points.
    pub l2: f64,
    pub grid: Option<GridSpec>,
    pub tolerance_used: f64,
    pub pass: bool,
    pub worst_point: (f64, f64),
    /// Extra diagnostics, e.g. an observed convergence order.
    pub note: Option<String>,
}

impl ResidualReport {
    /// Builds a report from `(x, y, residual)` samples.
    pub fn from_samples(
        name: impl Into<String>,
        samples: &[Sample],
        tolerance: f64,
        grid: Option<GridSpec>,
    ) -> Self {
        let mut linf: f64 = 0.0;
        let mut worst = (f64::NAN, f64::NAN);
        let mut sq = 0.0;
        let mut nan = false;
        for &(x, y, r) in samples {
            if r.is_nan() {
                nan = true;
                worst = (x, y);
                continue;
            }
            if r > linf || worst.0.is_nan() {
                linf = linf.max(r);
                worst = (x, y);
            }
            sq += r * r;
        }
        if nan {
            linf = f64::NAN;
        }
        let l2 = if samples.is_empty() {
            0.0
        } else {
            (sq / samples.len() as f64).sqrt()
        };
        ResidualReport {
            name: name.into(),
            linf,
            l2,
            grid,
            tolerance_used: tolerance,
            pass: linf <= tolerance,
            worst_point: worst,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} linf={:.6e} l2={:.6e} tol={:.3e} status={} worst=({:.6},{:.6})",
            self.name,
            self.linf,
            self.l2,
            self.tolerance_used,
            if self.pass { "PASS" } else { "FAIL" },
            self.worst_point.0,
            self.worst_point.1
        )?;
        if let Some(n) = &self.note {
            write!(f, " note=\"{n}\"")?;
        }
        Ok(())
    }
}

/// Both DS residual reports plus the fitted constant shift diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DsResidual {
    pub q_eq: ResidualReport,
    pub r_eq: ResidualReport,
    /// Constant `c` minimising `Σ|res_q + c·q|²`; reported, never applied.
    pub shift: Option<CScalar>,
    /// `L∞` of the q-equation residual after applying `shift`.
    pub shifted_q_linf: Option<f64>,
}

/// Residuals of
/// `iq_t + q_yy − q_xx + q(A1 − A2) = 0` and
/// `ir_t + r_xx − r_yy + r(A2 − A1) = 0`
/// on interior nodes: central difference in t, 3-point second differences
/// in x and y.
pub fn ds_residual<F>(
    fields_at: F,
    t: f64,
    h_t: f64,
    fit_constant_shift: bool,
    tol: f64,
) -> Result<DsResidual, VerifyError>
where
    F: Fn(f64) -> Result<FieldGrid, VerifyError>,
{
    let now = fields_at(t)?;
    let plus = fields_at(t + h_t)?;
    let minus = fields_at(t - h_t)?;
    let spec = now.spec;
    if spec.nx < 3 || spec.ny < 3 || !(h_t > 0.0) {
        return Err(VerifyError::GridTooSmall);
    }
    let same =
        |g: &FieldGrid| g.spec.nx == spec.nx && g.spec.ny == spec.ny && g.q.len() == spec.len();
    if !same(&plus) || !same(&minus) {
        return Err(VerifyError::GridMismatch);
    }
    let (hx, hy) = (spec.hx(), spec.hy());
    let mut q_res = Vec::new();
    let mut r_res = Vec::new();
    let mut q_vals = Vec::new();
    for j in 1..spec.ny - 1 {
        for i in 1..spec.nx - 1 {
            let k = spec.index(i, j);
            let (kxm, kxp) = (spec.index(i - 1, j), spec.index(i + 1, j));
            let (kym, kyp) = (spec.index(i, j - 1), spec.index(i, j + 1));
            let d2x = |f: &[CScalar]| (f[kxp] - 2.0 * f[k] + f[kxm]) / (hx * hx);
            let d2y = |f: &[CScalar]| (f[kyp] - 2.0 * f[k] + f[kym]) / (hy * hy);
            let q_t = (plus.q[k] - minus.q[k]) / (2.0 * h_t);
            let r_t = (plus.r[k] - minus.r[k]) / (2.0 * h_t);
            let diff = now.a1[k] - now.a2[k];
            let rq = I * q_t + d2y(&now.q) - d2x(&now.q) + now.q[k] * diff;
            let rr = I * r_t + d2x(&now.r) - d2y(&now.r) - now.r[k] * diff;
            q_res.push((spec.x(i), spec.y(j), rq));
            r_res.push((spec.x(i), spec.y(j), rr.norm()));
            q_vals.push(now.q[k]);
        }
    }
    let (shift, shifted_q_linf) = if fit_constant_shift {
        let den: f64 = q_vals.iter().map(|q| q.norm_sqr()).sum();
        if den > 0.0 {
            let num: CScalar = q_vals.iter().zip(&q_res).map(|(q, r)| q.conj() * r.2).sum();
            let c = -num / den;
            let linf = q_vals
                .iter()
                .zip(&q_res)
                .map(|(q, r)| (r.2 + c * q).norm())
                .fold(0.0, f64::max);
            (Some(c), Some(linf))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };
    let q_abs: Vec<_> = q_res.iter().map(|(x, y, r)| (*x, *y, r.norm())).collect();
    Ok(DsResidual {
        q_eq: ResidualReport::from_samples("ds_q_equation", &q_abs, tol, Some(spec)),
        r_eq: ResidualReport::from_samples("ds_r_equation", &r_res, tol, Some(spec)),
        shift,
        shifted_q_linf,
    })
}

/// Evaluates the chain fields on `spec` at time `t`.
pub fn chain_grid(ev: &EigenEvaluator, spec: &GridSpec, t: f64) -> Result<FieldGrid, VerifyError> {
    Ok(crate::fields::chain_fields_with_derivatives(ev, &spec.at_time(t))?.0)
}

/// DS residual of the chain on `spec` and on the twice-refined grid (with
/// `h_t` halved); the observed order is `log2(linf_coarse / linf_fine)`.
pub fn ds_convergence(
    ev: &EigenEvaluator,
    spec: &GridSpec,
    h_t: f64,
    tol: f64,
) -> Result<(DsResidual, DsResidual, f64), VerifyError> {
    let coarse = ds_residual(|t| chain_grid(ev, spec, t), spec.t, h_t, true, tol)?;
    let fine_spec = spec.refined(2);
    let fine = ds_residual(
        |t| chain_grid(ev, &fine_spec, t),
        spec.t,
        h_t / 2.0,
        true,
        tol,
    )?;
    let worst = |d: &DsResidual| d.q_eq.linf.max(d.r_eq.linf);
    let order = (worst(&coarse) / worst(&fine)).log2();
    Ok((coarse, fine, order))
}

/// One step's matrices at a point, with an inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub x: f64,
    pub y: f64,
    pub q: Mat2,
    pub p: Mat2,
    pub lambda: CScalar,
    pub inverse: InverseStep,
}

impl StepSample {
    pub fn from_qp(x: f64, y: f64, qp: &StepQP) -> Result<Self, VerifyError> {
        Ok(StepSample {
            x,
            y,
            q: qp.q.value(),
            p: qp.p.value(),
            lambda: qp.lambda,
            inverse: qp.inverse()?,
        })
    }

    pub fn from_oracle(
        x: f64,
        y: f64,
        lambda: CScalar,
        lambda_p: CScalar,
        sol: &OracleSolution,
    ) -> Self {
        StepSample {
            x,
            y,
            q: sol.q,
            p: sol.p,
            lambda,
            inverse: InverseStep {
                qp: sol.qp,
                pp: sol.pp,
                lambda_p,
            },
        }
    }

    fn b(&self, lambda: CScalar) -> Result<Mat2, VerifyError> {
        Ok(crate::backlund::bt_matrix(
            &self.q,
            &self.p,
            self.lambda,
            lambda,
        )?)
    }
}

/// Inverse, kernel, parity and rank-one checks over all samples and λ values.
pub fn identity_suite(
    samples: &[StepSample],
    lambdas: &[CScalar],
    tol: f64,
) -> Result<Vec<ResidualReport>, VerifyError> {
    let names = [
        "inverse_right",
        "inverse_left",
        "annihilation_B(lp)P'",
        "annihilation_PBinv(l)",
        "annihilation_Binv(l)P",
        "annihilation_P'B(lp)",
        "parity",
        "rank_one_P",
    ];
    let mut rows: Vec<Vec<Sample>> = vec![Vec::new(); names.len()];
    let id = Mat2::identity();
    for s in samples {
        let ann = annihilation_residuals(&s.q, &s.p, s.lambda, &s.inverse)?;
        for (k, a) in ann.iter().enumerate() {
            rows[2 + k].push((s.x, s.y, *a));
        }
        let pn = s.p.norm().powi(2).max(f64::MIN_POSITIVE);
        rows[7].push((s.x, s.y, s.p.det().norm() / pn));
        for &l in lambdas {
            let b = s.b(l)?;
            let binv = s.inverse.evaluate(l)?;
            rows[0].push((s.x, s.y, (b * binv - id).norm()));
            rows[1].push((s.x, s.y, (binv * b - id).norm()));
            let bm = s.b(-l)?;
            rows[6].push((s.x, s.y, (b - bm).norm() / b.norm().max(f64::MIN_POSITIVE)));
        }
    }
    Ok(names
        .iter()
        .zip(rows)
        .map(|(n, r)| {
            let t = match *n {
                "parity" => TOL_PARITY,
                "rank_one_P" => TOL_RANK_ONE,
                _ => tol,
            };
            ResidualReport::from_samples(*n, &r, t, None)
        })
        .collect())
}

fn fd_jets(
    ev: &EigenEvaluator,
    x: f64,
    y: f64,
    t: f64,
    lambda: CScalar,
    h: f64,
) -> Result<(Mat2, Mat2), VerifyError> {
    let at =
        |x: f64, y: f64| -> Result<Mat2, VerifyError> { Ok(ev.evaluate(x, y, t, lambda)?.value()) };
    let d = |fm2: Mat2, fm1: Mat2, fp1: Mat2, fp2: Mat2| {
        (fm2 - fp2 + (fp1 - fm1).scale(re(8.0))).scale(re(1.0 / (12.0 * h)))
    };
    let dx = d(
        at(x - 2.0 * h, y)?,
        at(x - h, y)?,
        at(x + h, y)?,
        at(x + 2.0 * h, y)?,
    );
    let dy = d(
        at(x, y - 2.0 * h)?,
        at(x, y - h)?,
        at(x, y + h)?,
        at(x, y + 2.0 * h)?,
    );
    Ok((dx, dy))
}

/// Analytic jets of `Φ_n` against fourth-order central differences at step
/// `h`; the note carries the order observed between `h` and `h/2`.
pub fn jet_crosscheck(
    ev: &EigenEvaluator,
    points: &[(f64, f64, f64)],
    lambda: CScalar,
    h: f64,
    tol: f64,
) -> Result<ResidualReport, VerifyError> {
    let mut samples = Vec::with_capacity(points.len());
    let mut coarse_max: f64 = 0.0;
    let mut fine_max: f64 = 0.0;
    for &(x, y, t) in points {
        let phi = ev.evaluate(x, y, t, lambda)?;
        let (ax, ay) = (phi.dx(), phi.dy());
        let scale = ax.norm().max(ay.norm()).max(f64::MIN_POSITIVE);
        let err = |(fx, fy): (Mat2, Mat2)| (fx - ax).norm().max((fy - ay).norm()) / scale;
        let e1 = err(fd_jets(ev, x, y, t, lambda, h)?);
        let e2 = err(fd_jets(ev, x, y, t, lambda, h / 2.0)?);
        coarse_max = coarse_max.max(e1);
        fine_max = fine_max.max(e2);
        samples.push((x, y, e1));
    }
    // below this the differences are roundoff and carry no order
    let order = if fine_max > 1e-11 {
        format!("{:.3}", (coarse_max / fine_max).log2())
    } else {
        "roundoff".to_string()
    };
    Ok(
        ResidualReport::from_samples("jet_crosscheck", &samples, tol, None)
            .with_note(format!("h={h:e} observed_order={order}")),
    )
}

/// Spatial residual `‖MΦ_n − U_nΦ_n‖` from analytic jets and time residual
/// `‖∂tΦ_n − V_nΦ_n‖` from finite-difference stencils, over interior nodes.
pub fn lax_residual_chain(
    ev: &EigenEvaluator,
    fields: &FieldGrid,
    lambda: CScalar,
    tol: &Tolerances,
) -> Result<(ResidualReport, ResidualReport), VerifyError> {
    let spec = fields.spec;
    if spec.nx < 3 || spec.ny < 3 {
        return Err(VerifyError::GridTooSmall);
    }
    if fields.q.len() != spec.len() || fields.n_steps != ev.depth() {
        return Err(VerifyError::GridMismatch);
    }
    let sv = SpectralValue::new(lambda)?;
    let seed = ev.seed();
    let t = spec.t;
    let interior: Vec<(usize, usize)> = (1..spec.ny - 1)
        .flat_map(|j| (1..spec.nx - 1).map(move |i| (i, j)))
        .collect();
    let rows: Vec<(Sample, Sample)> = interior
        .par_iter()
        .map(|&(i, j)| -> Result<_, VerifyError> {
            let (x, y) = (spec.x(i), spec.y(j));
            let k = spec.index(i, j);
            let phi = ev.evaluate(x, y, t, lambda)?;
            let u = build_u_sv(fields.q[k], fields.r[k], seed.alpha, seed.beta, sv);
            let spatial = spatial_lax_residual(&phi, &u);
            let [q, r, q_x, _, _, r_y] = fields_with_derivatives(ev, x, y, t)?;
            let local = LocalFields {
                q,
                r,
                q_x,
                r_y,
                a1: fields.a1[k],
                a2: fields.a2[k],
            };
            let stencil = PhiStencil::sample(
                |x, y, t| -> Result<Mat2, VerifyError> {
                    Ok(ev.evaluate(x, y, t, lambda)?.value())
                },
                x,
                y,
                t,
                StencilSteps::default_at(x),
            )?;
            let time = time_lax_residual(&stencil, &local, seed.alpha, seed.beta, seed.k, lambda)?;
            Ok(((x, y, spatial), (x, y, time)))
        })
        .collect::<Result<_, _>>()?;
    let (s, tm): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((
        ResidualReport::from_samples(
            format!("lax_spatial_n{}", ev.depth()),
            &s,
            tol.lax_spatial,
            Some(spec),
        ),
        ResidualReport::from_samples(
            format!("lax_time_n{}", ev.depth()),
            &tm,
            tol.lax_time,
            Some(spec),
        ),
    ))
}
