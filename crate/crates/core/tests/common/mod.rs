#![allow(dead_code)]

use dsbt::algebra::{c, re, CScalar};
use dsbt::backlund::{StepParams, TimeCoeff};
use dsbt::laxpair::SeedParams;
use rand::Rng;

pub fn rc<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> CScalar {
    c(rng.random_range(lo..hi), rng.random_range(lo..hi))
}

/// Complex number with modulus in `[lo, hi]` and uniform phase.
pub fn polar<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> CScalar {
    CScalar::from_polar(
        rng.random_range(lo..hi),
        rng.random_range(0.0..std::f64::consts::TAU),
    )
}

pub fn random_seed<R: Rng>(rng: &mut R) -> SeedParams {
    let m0 = polar(rng, 0.6, 1.4);
    let n0 = m0 * polar(rng, 0.6, 1.2) * c(-0.8, 0.5);
    SeedParams::consistent(
        rc(rng, -0.5, 0.5),
        rc(rng, -0.5, 0.5),
        m0,
        n0,
        re(rng.random_range(-0.3..0.3)),
        re(rng.random_range(-0.3..0.3)),
        re(rng.random_range(0.2..0.8)),
        re(rng.random_range(-0.1..0.1)),
    )
    .expect("random seed is valid")
}

/// General step with well-separated poles.
pub fn random_step<R: Rng>(rng: &mut R) -> StepParams {
    let lambda = polar(rng, 0.8, 1.5);
    let lambda_p = lambda * polar(rng, 0.4, 0.7);
    StepParams {
        lambda,
        lambda_p,
        a: polar(rng, 0.5, 1.5),
        b: polar(rng, 0.2, 1.0),
        f11: TimeCoeff::constant(polar(rng, 0.5, 1.5)),
        f12: TimeCoeff::constant(rc(rng, -0.5, 0.5)),
        f21: TimeCoeff::constant(rc(rng, -0.5, 0.5)),
        f22: TimeCoeff::constant(polar(rng, 0.5, 1.5)),
        m1: re(rng.random_range(-0.4..0.4)),
        m1p: re(rng.random_range(-0.4..0.4)),
        m2: re(rng.random_range(-0.4..0.4)),
        m2p: re(rng.random_range(-0.4..0.4)),
    }
}

pub fn random_reduced_step<R: Rng>(rng: &mut R) -> StepParams {
    let s = random_step(rng);
    StepParams::reduced(s.lambda, s.lambda_p, s.a, s.f11, s.f22, s.m1, s.m2p)
}

/// Spectral sample away from `±λ_l`, `±λ'_l` of every step.
pub fn off_pole<R: Rng>(rng: &mut R, steps: &[StepParams]) -> CScalar {
    loop {
        let l = polar(rng, 0.4, 2.0);
        let far = steps.iter().all(|s| {
            [s.lambda, s.lambda_p]
                .iter()
                .all(|p| (l * l - p * p).norm() > 0.05 * p.norm_sqr())
        });
        if far {
            return l;
        }
    }
}

/// Seed with `r0 = 0` and a reduced step tuned so that `q1` solves the
/// q-equation exactly: `m1 = m2p + i·a·m0` with `a = −q0/2`.
pub fn one_soliton() -> (SeedParams, StepParams) {
    let m0 = c(1.0, 0.3);
    let seed = SeedParams::consistent(
        c(0.6, 0.1),
        re(0.0),
        m0,
        c(-0.6, 0.2),
        re(0.2),
        re(-0.1),
        re(0.5),
        re(0.05),
    )
    .expect("valid seed");
    let m2p = re(-0.3);
    let step = StepParams::reduced(
        c(1.2, 0.3),
        c(0.7, 0.0),
        re(1.0),
        TimeCoeff::constant(re(0.2)),
        TimeCoeff::constant(re(1.0)),
        m2p + dsbt::algebra::I * seed.a * m0,
        m2p,
    );
    (seed, step)
}
