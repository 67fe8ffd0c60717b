//! Run configuration: a TOML file with `[seed]`, `[[steps]]`, `[grid]`,
//! `[verify]` and `[output]` blocks. Complex numbers are `[re, im]` pairs.
//!
//! Parsing is two-stage: serde reads an all-optional raw form, then
//! [`RawConfig::resolve`] checks presence and module invariants so every
//! error names the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{c, CScalar};
use crate::backlund::{StepParams, TimeCoeff};
use crate::fields::GridSpec;
use crate::laxpair::{SeedParams, TimeExponents};
use crate::verify::Tolerances;

pub type Pair = [f64; 2];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    /// `a`, `b`, `A10 = A20` and ξ derived from the Lax pair.
    #[default]
    Consistent,
    /// Every constant given explicitly.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawSeed {
    pub mode: Option<SeedMode>,
    pub q0: Option<Pair>,
    pub r0: Option<Pair>,
    pub m0: Option<Pair>,
    pub n0: Option<Pair>,
    pub alpha: Option<Pair>,
    pub beta: Option<Pair>,
    pub k: Option<Pair>,
    /// Shared background value of `A1`, `A2` in consistent mode.
    pub background: Option<Pair>,
    pub a: Option<Pair>,
    pub b: Option<Pair>,
    pub a10: Option<Pair>,
    pub a20: Option<Pair>,
    pub xi1: Option<Pair>,
    pub xi2: Option<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawStep {
    pub lambda: Option<Pair>,
    pub lambda_lp: Option<Pair>,
    pub a: Option<Pair>,
    pub b: Option<Pair>,
    pub f11: Option<Pair>,
    pub f12: Option<Pair>,
    pub f21: Option<Pair>,
    pub f22: Option<Pair>,
    /// Exponential time rates of `f^{ij}`; zero when absent.
    pub nu11: Option<Pair>,
    pub nu12: Option<Pair>,
    pub nu21: Option<Pair>,
    pub nu22: Option<Pair>,
    pub m1: Option<Pair>,
    pub m1p: Option<Pair>,
    pub m2: Option<Pair>,
    pub m2p: Option<Pair>,
    /// Time rate of the step's exponential in the closed-form `q_n`; fitted
    /// from the seed when absent.
    pub delta: Option<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub x: Option<[f64; 2]>,
    pub y: Option<[f64; 2]>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawTolerances {
    pub algebraic: Option<f64>,
    pub jet: Option<f64>,
    pub pde: Option<f64>,
    pub lax_spatial: Option<f64>,
    pub lax_time: Option<f64>,
    pub compare: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawVerify {
    pub checks: Option<Vec<String>>,
    pub lambdas: Option<Vec<Pair>>,
    pub h_t: Option<f64>,
    pub tolerances: Option<RawTolerances>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub depths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<RawSeed>,
    #[serde(default)]
    pub steps: Vec<RawStep>,
    pub grid: Option<RawGrid>,
    pub verify: Option<RawVerify>,
    pub output: Option<RawOutput>,
}

/// Checks run by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Lax,
    Identities,
    Jets,
    Ds,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::Lax, Check::Identities, Check::Jets, Check::Ds];

    pub fn name(self) -> &'static str {
        match self {
            Check::Lax => "lax",
            Check::Identities => "identities",
            Check::Jets => "jets",
            Check::Ds => "ds",
        }
    }

    fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub checks: Vec<Check>,
    pub lambdas: Vec<CScalar>,
    pub h_t: f64,
    pub tolerances: Tolerances,
    pub compare_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: SeedParams,
    pub steps: Vec<StepParams>,
    pub grid: GridSpec,
    pub verify: VerifySettings,
    pub out_dir: PathBuf,
    pub depths: Vec<usize>,
    /// Per-step `delta` overrides for the closed-form comparison.
    pub delta_overrides: Vec<Option<CScalar>>,
    /// The parsed file with command-line overrides applied, echoed into the
    /// manifest.
    pub raw: RawConfig,
}

fn cx(p: Pair) -> CScalar {
    c(p[0], p[1])
}

fn need(v: Option<Pair>, path: &str) -> Result<CScalar, ConfigError> {
    v.map(cx)
        .ok_or_else(|| invalid(path, "missing required field"))
}

fn or_zero(v: Option<Pair>) -> CScalar {
    v.map(cx).unwrap_or_default()
}

impl RawSeed {
    fn resolve(&self) -> Result<SeedParams, ConfigError> {
        let f = |name: &str, v: Option<Pair>| need(v, &format!("seed.{name}"));
        let (q0, r0, m0, n0) = (
            f("q0", self.q0)?,
            f("r0", self.r0)?,
            f("m0", self.m0)?,
            f("n0", self.n0)?,
        );
        let (alpha, beta, k) = (
            f("alpha", self.alpha)?,
            f("beta", self.beta)?,
            f("k", self.k)?,
        );
        let seed = match self.mode.unwrap_or_default() {
            SeedMode::Consistent => {
                for (name, v) in [
                    ("a", self.a),
                    ("b", self.b),
                    ("a10", self.a10),
                    ("a20", self.a20),
                    ("xi1", self.xi1),
                    ("xi2", self.xi2),
                ] {
                    if v.is_some() {
                        return Err(invalid(
                            format!("seed.{name}"),
                            "only allowed with mode = \"raw\"",
                        ));
                    }
                }
                SeedParams::consistent(q0, r0, m0, n0, alpha, beta, k, or_zero(self.background))
                    .map_err(|e| invalid("seed", e.to_string()))?
            }
            SeedMode::Raw => {
                if self.background.is_some() {
                    return Err(invalid(
                        "seed.background",
                        "use a10 and a20 with mode = \"raw\"",
                    ));
                }
                let time = match (self.xi1, self.xi2) {
                    (None, None) => TimeExponents::Dispersion,
                    (Some(x1), Some(x2)) => TimeExponents::Fixed {
                        xi1: cx(x1),
                        xi2: cx(x2),
                    },
                    (None, Some(_)) => {
                        return Err(invalid("seed.xi1", "xi1 and xi2 must be given together"))
                    }
                    (Some(_), None) => {
                        return Err(invalid("seed.xi2", "xi1 and xi2 must be given together"))
                    }
                };
                let p = SeedParams {
                    q0,
                    r0,
                    m0,
                    n0,
                    a: f("a", self.a)?,
                    b: f("b", self.b)?,
                    alpha,
                    beta,
                    k,
                    a10: f("a10", self.a10)?,
                    a20: f("a20", self.a20)?,
                    time,
                };
                p.validate().map_err(|e| invalid("seed", e.to_string()))?;
                p
            }
        };
        Ok(seed)
    }
}

impl RawStep {
    fn resolve(&self, idx: usize) -> Result<StepParams, ConfigError> {
        let path = |name: &str| format!("steps[{idx}].{name}");
        let coeff = |amp: Option<Pair>, rate: Option<Pair>| {
            TimeCoeff::exponential(or_zero(amp), or_zero(rate))
        };
        let step = StepParams {
            lambda: need(self.lambda, &path("lambda"))?,
            lambda_p: need(self.lambda_lp, &path("lambda_lp"))?,
            a: need(self.a, &path("a"))?,
            b: or_zero(self.b),
            f11: coeff(
                Some(
                    self.f11
                        .ok_or_else(|| invalid(path("f11"), "missing required field"))?,
                ),
                self.nu11,
            ),
            f12: coeff(self.f12, self.nu12),
            f21: coeff(self.f21, self.nu21),
            f22: coeff(
                Some(
                    self.f22
                        .ok_or_else(|| invalid(path("f22"), "missing required field"))?,
                ),
                self.nu22,
            ),
            m1: or_zero(self.m1),
            m1p: or_zero(self.m1p),
            m2: or_zero(self.m2),
            m2p: or_zero(self.m2p),
        };
        step.validate()
            .map_err(|e| invalid(format!("steps[{idx}]"), e.to_string()))?;
        Ok(step)
    }
}

impl RawGrid {
    fn resolve(&self) -> Result<GridSpec, ConfigError> {
        let x = self
            .x
            .ok_or_else(|| invalid("grid.x", "missing required field"))?;
        let y = self
            .y
            .ok_or_else(|| invalid("grid.y", "missing required field"))?;
        let spec = GridSpec {
            x_min: x[0],
            x_max: x[1],
            nx: self
                .nx
                .ok_or_else(|| invalid("grid.nx", "missing required field"))?,
            y_min: y[0],
            y_max: y[1],
            ny: self
                .ny
                .ok_or_else(|| invalid("grid.ny", "missing required field"))?,
            t: self.t.unwrap_or(0.0),
        };
        spec.validate()
            .map_err(|e| invalid("grid", e.to_string()))?;
        Ok(spec)
    }
}

/// Spectral samples used when `verify.lambdas` is absent.
pub const DEFAULT_LAMBDAS: [Pair; 3] = [[1.05, 0.35], [0.55, -0.8], [1.9, 0.15]];
/// Agreement required of the compact formula.
pub const DEFAULT_COMPARE_TOL: f64 = 1e-8;

fn positive(v: Option<f64>, default: f64, path: &str) -> Result<f64, ConfigError> {
    match v {
        None => Ok(default),
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(_) => Err(invalid(path, "must be positive and finite")),
    }
}

impl RawVerify {
    fn resolve(&self) -> Result<VerifySettings, ConfigError> {
        let checks = match &self.checks {
            None => Check::ALL.to_vec(),
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Check::parse(s).ok_or_else(|| {
                        invalid(
                            format!("verify.checks[{i}]"),
                            format!("unknown check {s:?} (expected lax, identities, jets or ds)"),
                        )
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let lambdas: Vec<CScalar> = self
            .lambdas
            .clone()
            .unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec())
            .into_iter()
            .map(cx)
            .collect();
        if let Some(i) = lambdas
            .iter()
            .position(|l| l.norm() == 0.0 || !l.is_finite())
        {
            return Err(invalid(
                format!("verify.lambdas[{i}]"),
                "must be finite and nonzero",
            ));
        }
        let t = self.tolerances.clone().unwrap_or_default();
        let d = Tolerances::default();
        Ok(VerifySettings {
            checks,
            lambdas,
            h_t: positive(self.h_t, 1e-3, "verify.h_t")?,
            tolerances: Tolerances {
                algebraic: positive(t.algebraic, d.algebraic, "verify.tolerances.algebraic")?,
                jet: positive(t.jet, d.jet, "verify.tolerances.jet")?,
                pde: positive(t.pde, d.pde, "verify.tolerances.pde")?,
                lax_spatial: positive(
                    t.lax_spatial,
                    d.lax_spatial,
                    "verify.tolerances.lax_spatial",
                )?,
                lax_time: positive(t.lax_time, d.lax_time, "verify.tolerances.lax_time")?,
            },
            compare_tol: positive(t.compare, DEFAULT_COMPARE_TOL, "verify.tolerances.compare")?,
        })
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets `verify.tolerances.<name>`.
    pub fn set_tolerance(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let v = self.verify.get_or_insert_with(Default::default);
        let t = v.tolerances.get_or_insert_with(Default::default);
        let slot = match name {
            "algebraic" => &mut t.algebraic,
            "jet" => &mut t.jet,
            "pde" => &mut t.pde,
            "lax_spatial" => &mut t.lax_spatial,
            "lax_time" => &mut t.lax_time,
            "compare" => &mut t.compare,
            _ => {
                return Err(invalid(
                    format!("--tolerance {name}"),
                    "unknown tolerance name",
                ))
            }
        };
        *slot = Some(value);
        Ok(())
    }

    pub fn resolve(self) -> Result<RunConfig, ConfigError> {
        let seed = self
            .seed
            .as_ref()
            .ok_or_else(|| invalid("seed", "missing block"))?
            .resolve()?;
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| s.resolve(i))
            .collect::<Result<Vec<_>, _>>()?;
        if steps.len() > crate::backlund::MAX_DEPTH {
            return Err(invalid(
                "steps",
                format!("at most {} steps are supported", crate::backlund::MAX_DEPTH),
            ));
        }
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| invalid("grid", "missing block"))?
            .resolve()?;
        let verify = self.verify.clone().unwrap_or_default().resolve()?;
        let output = self.output.clone().unwrap_or_default();
        let depths = output.depths.unwrap_or_else(|| (0..=steps.len()).collect());
        if let Some(i) = depths.iter().position(|&d| d > steps.len()) {
            return Err(invalid(
                format!("output.depths[{i}]"),
                format!("exceeds the number of steps ({})", steps.len()),
            ));
        }
        let delta_overrides = self.steps.iter().map(|s| s.delta.map(cx)).collect();
        Ok(RunConfig {
            seed,
            steps,
            delta_overrides,
            grid,
            verify,
            out_dir: output.dir.unwrap_or_else(|| PathBuf::from("out")),
            depths,
            raw: self,
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        RawConfig::load(path)?.resolve()
    }

    /// Resolved configuration in TOML form, for the manifest.
    pub fn manifest(&self) -> String {
        let mut raw = self.raw.clone();
        let out = raw.output.get_or_insert_with(Default::default);
        out.dir = Some(self.out_dir.clone());
        out.depths = Some(self.depths.clone());
        toml::to_string(&raw).unwrap_or_default()
    }
}
