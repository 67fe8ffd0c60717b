//! The `generate`, `verify` and `compare` commands and their file formats.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{c, CScalar};
use crate::backlund::{BacklundError, EigenEvaluator};
use crate::config::{Check, ConfigError, RawConfig, RunConfig};
use crate::fields::{
    chain_fields_with_derivatives, compact_q, fields_at, CompactParams, CompactReading, FieldGrid,
    FieldsError, GridSpec, M2Reading, MbarReading,
};
use crate::verify::{
    ds_residual, identity_suite, jet_crosscheck, lax_residual_chain, ResidualReport, StepSample,
    VerifyError,
};

/// Environment variable holding the worker thread count. Unset or `0`
/// means all available cores.
pub const THREADS_ENV: &str = "DSBT_THREADS";

pub const CSV_HEADER: [&str; 10] = [
    "x", "y", "re_q", "im_q", "re_r", "im_r", "re_A1", "im_A1", "re_A2", "im_A2",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for everything that fails while
    /// computing or writing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<FieldsError> for CliError {
    fn from(e: FieldsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<BacklundError> for CliError {
    fn from(e: BacklundError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Command-line adjustments applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub depth: Option<usize>,
    pub tolerances: Vec<(String, f64)>,
}

/// Parses `name=value`.
pub fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("bad number {value:?}"))?;
    Ok((name.trim().to_string(), v))
}

pub fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig, CliError> {
    let mut raw = RawConfig::load(path)?;
    for (name, v) in &ov.tolerances {
        raw.set_tolerance(name, *v)?;
    }
    if let Some(dir) = &ov.out {
        raw.output.get_or_insert_with(Default::default).dir = Some(dir.clone());
    }
    if let Some(d) = ov.depth {
        raw.output.get_or_insert_with(Default::default).depths = Some(vec![d]);
    }
    Ok(raw.resolve()?)
}

/// Result of a command: its report lines and whether every check passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub pass: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a field grid as CSV, y in the outer loop.
pub fn write_fields_csv(path: &Path, grid: &FieldGrid) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    let spec = grid.spec;
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let k = spec.index(i, j);
            let mut rec = vec![num(spec.x(i)), num(spec.y(j))];
            for v in [grid.q[k], grid.r[k], grid.a1[k], grid.a2[k]] {
                rec.push(num(v.re));
                rec.push(num(v.im));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Columns of a fields CSV in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldsCsv {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub q: Vec<CScalar>,
    pub r: Vec<CScalar>,
    pub a1: Vec<CScalar>,
    pub a2: Vec<CScalar>,
}

pub fn read_fields_csv(path: &Path) -> Result<FieldsCsv, CliError> {
    let mut rd = csv::Reader::from_path(path)?;
    if rd.headers()?.iter().ne(CSV_HEADER) {
        return Err(CliError::Numerical(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut out = FieldsCsv::default();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Numerical(format!("{}: {e}", path.display())))?;
        if v.len() != CSV_HEADER.len() {
            return Err(CliError::Numerical(format!(
                "{}: short record",
                path.display()
            )));
        }
        out.x.push(v[0]);
        out.y.push(v[1]);
        out.q.push(c(v[2], v[3]));
        out.r.push(c(v[4], v[5]));
        out.a1.push(c(v[6], v[7]));
        out.a2.push(c(v[8], v[9]));
    }
    Ok(out)
}

fn evaluator(cfg: &RunConfig) -> Result<EigenEvaluator, CliError> {
    Ok(EigenEvaluator::with_steps(cfg.seed, &cfg.steps)?)
}

/// Writes `fields_n<k>.csv` for every requested depth plus `manifest.toml`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    prepare_dir(&cfg.out_dir)?;
    let ev = evaluator(cfg)?;
    let mut lines = Vec::new();
    for &k in &cfg.depths {
        let (grid, _) = chain_fields_with_derivatives(&ev.truncated(k), &cfg.grid)?;
        let path = cfg.out_dir.join(format!("fields_n{k}.csv"));
        write_fields_csv(&path, &grid)?;
        lines.push(format!("wrote {}", path.display()));
    }
    write_text(&cfg.out_dir.join("manifest.toml"), &cfg.manifest())?;
    Ok(Outcome { lines, pass: true })
}

/// Roughly `per_axis²` nodes spread over the grid, boundary excluded.
fn sample_nodes(spec: &GridSpec, per_axis: usize) -> Vec<(f64, f64)> {
    let pick = |n: usize| -> Vec<usize> {
        let inner = n - 2;
        let m = per_axis.min(inner);
        let mut v: Vec<usize> = (0..m)
            .map(|s| 1 + s * (inner - 1) / (m.max(2) - 1))
            .collect();
        v.dedup();
        v
    };
    let (is, js) = (pick(spec.nx), pick(spec.ny));
    js.iter()
        .flat_map(|&j| is.iter().map(move |&i| (spec.x(i), spec.y(j))))
        .collect()
}

fn coarsened(spec: &GridSpec) -> GridSpec {
    GridSpec {
        nx: spec.nx.div_ceil(2),
        ny: spec.ny.div_ceil(2),
        ..*spec
    }
}

/// Runs the selected checks on the deepest requested chain and writes
/// `report.txt`.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    prepare_dir(&cfg.out_dir)?;
    let depth = cfg.depths.iter().copied().max().unwrap_or(cfg.steps.len());
    let ev = evaluator(cfg)?.truncated(depth);
    let v = &cfg.verify;
    let tol = &v.tolerances;
    let spec = cfg.grid;
    let mut reports: Vec<ResidualReport> = Vec::new();
    let mut grid_cache: Option<FieldGrid> = None;
    let mut grid = |ev: &EigenEvaluator| -> Result<FieldGrid, CliError> {
        if grid_cache.is_none() {
            grid_cache = Some(chain_fields_with_derivatives(ev, &spec)?.0);
        }
        Ok(grid_cache.clone().expect("filled above"))
    };
    for check in &v.checks {
        match check {
            Check::Lax => {
                let g = grid(&ev)?;
                for (i, &l) in v.lambdas.iter().enumerate() {
                    let (s, t) = lax_residual_chain(&ev, &g, l, tol)?;
                    for mut r in [s, t] {
                        r.name = format!("{}_lambda{i}", r.name);
                        reports.push(r);
                    }
                }
            }
            Check::Identities => {
                let nodes = sample_nodes(&spec, 5);
                let points: Vec<_> = nodes
                    .par_iter()
                    .map(|&(x, y)| ev.chain_point(x, y, spec.t).map(|cp| (x, y, cp)))
                    .collect::<Result<_, _>>()?;
                for l in 0..ev.depth() {
                    let samples = points
                        .iter()
                        .map(|(x, y, cp)| StepSample::from_qp(*x, *y, &cp.steps[l]))
                        .collect::<Result<Vec<_>, _>>()?;
                    for mut r in identity_suite(&samples, &v.lambdas, tol.algebraic)? {
                        r.name = format!("step{}_{}", l + 1, r.name);
                        reports.push(r);
                    }
                }
            }
            Check::Jets => {
                let pts: Vec<_> = sample_nodes(&spec, 3)
                    .into_iter()
                    .map(|(x, y)| (x, y, spec.t))
                    .collect();
                for (i, &l) in v.lambdas.iter().enumerate() {
                    let mut r = jet_crosscheck(&ev, &pts, l, 1e-3, tol.jet)?;
                    r.name = format!("{}_lambda{i}", r.name);
                    reports.push(r);
                }
            }
            Check::Ds => {
                let fine = ds_residual(
                    |t| Ok(chain_fields_with_derivatives(&ev, &spec.at_time(t))?.0),
                    spec.t,
                    v.h_t,
                    true,
                    tol.pde,
                )?;
                let cspec = coarsened(&spec);
                let coarse = ds_residual(
                    |t| Ok(chain_fields_with_derivatives(&ev, &cspec.at_time(t))?.0),
                    spec.t,
                    2.0 * v.h_t,
                    false,
                    tol.pde,
                )?;
                let order = |f: &ResidualReport, c: &ResidualReport| {
                    if f.linf == 0.0 && c.linf == 0.0 {
                        "exact".to_string()
                    } else {
                        format!("{:.3}", (c.linf / f.linf).log2())
                    }
                };
                let shift = match (fine.shift, fine.shifted_q_linf) {
                    (Some(s), Some(l)) => format!(
                        " fitted_shift={:.3e}{:+.3e}i shifted_linf={l:.3e}",
                        s.re, s.im
                    ),
                    _ => String::new(),
                };
                let qn = format!("observed_order={}{shift}", order(&fine.q_eq, &coarse.q_eq));
                let rn = format!("observed_order={}", order(&fine.r_eq, &coarse.r_eq));
                reports.push(fine.q_eq.with_note(qn));
                reports.push(fine.r_eq.with_note(rn));
            }
        }
    }
    let lines: Vec<String> = reports.iter().map(ToString::to_string).collect();
    let pass = reports.iter().all(|r| r.pass);
    let mut text = lines.join("\n");
    text.push('\n');
    write_text(&cfg.out_dir.join("report.txt"), &text)?;
    Ok(Outcome { lines, pass })
}

fn reading_name(r: CompactReading) -> &'static str {
    match (r.m2, r.mbar) {
        (M2Reading::FBlock, MbarReading::PlusIm) => "m2_from_F22+mbar_plus",
        (M2Reading::FBlock, MbarReading::MinusIm) => "m2_from_F22+mbar_minus",
        (M2Reading::AsPrinted, MbarReading::PlusIm) => "m2_as_printed+mbar_plus",
        (M2Reading::AsPrinted, MbarReading::MinusIm) => "m2_as_printed+mbar_minus",
    }
}

/// Maximum relative difference between recursion and product formula over
/// the interior nodes, per reading.
pub fn compare_depth(
    ev: &EigenEvaluator,
    compact: &CompactParams,
    spec: &GridSpec,
    n: usize,
) -> Result<[(CompactReading, f64); 4], CliError> {
    let ev = ev.truncated(n);
    let nodes: Vec<(f64, f64)> = (1..spec.ny - 1)
        .flat_map(|j| (1..spec.nx - 1).map(move |i| (spec.x(i), spec.y(j))))
        .collect();
    let readings = CompactReading::all();
    let per_node: Vec<[f64; 4]> = nodes
        .par_iter()
        .map(|&(x, y)| -> Result<[f64; 4], CliError> {
            let (q, _) = fields_at(&ev, x, y, spec.t)?;
            let mut out = [0.0; 4];
            for (o, rd) in out.iter_mut().zip(readings) {
                let qc = compact_q(compact, n, x, y, spec.t, rd)?;
                *o = (q - qc).norm() / q.norm().max(f64::MIN_POSITIVE);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let mut worst = [0.0f64; 4];
    for row in per_node {
        for (w, v) in worst.iter_mut().zip(row) {
            *w = if v.is_nan() { f64::NAN } else { w.max(v) };
        }
    }
    Ok([
        (readings[0], worst[0]),
        (readings[1], worst[1]),
        (readings[2], worst[2]),
        (readings[3], worst[3]),
    ])
}

/// Recursion vs product formula for each depth; writes `compare.txt`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if let Some(i) = cfg.steps.iter().position(|s| !s.is_reduced()) {
        return Err(ConfigError::Invalid {
            path: format!("steps[{i}]"),
            reason: "compare needs reduced steps (b = 0, f12 = f21 = 0)".into(),
        }
        .into());
    }
    if cfg.steps.is_empty() {
        return Err(ConfigError::Invalid {
            path: "steps".into(),
            reason: "compare needs at least one step".into(),
        }
        .into());
    }
    prepare_dir(&cfg.out_dir)?;
    let ev = evaluator(cfg)?;
    let compact = CompactParams::from_steps(&cfg.seed, &cfg.steps, &cfg.delta_overrides)?;
    let tol = cfg.verify.compare_tol;
    let mut lines = Vec::new();
    let mut pass = true;
    for n in cfg.depths.iter().copied().filter(|&n| n > 0) {
        let res = compare_depth(&ev, &compact, &cfg.grid, n)?;
        for (rd, err) in res {
            if rd == CompactReading::default() {
                let ok = err <= tol;
                pass &= ok;
                lines.push(format!(
                    "compare n={n} reading={} role=adopted max_rel={err:.6e} tol={tol:.3e} status={}",
                    reading_name(rd),
                    if ok { "PASS" } else { "FAIL" }
                ));
            } else {
                lines.push(format!(
                    "compare n={n} reading={} role=alternative max_rel={err:.6e}",
                    reading_name(rd)
                ));
            }
        }
        let best = res
            .iter()
            .filter(|(_, e)| *e <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(rd, _)| reading_name(*rd))
            .unwrap_or("none");
        lines.push(format!("resolved n={n} reading={best}"));
    }
    let mut f = fs::File::create(cfg.out_dir.join("compare.txt")).map_err(io_err(&cfg.out_dir))?;
    for l in &lines {
        writeln!(f, "{l}").map_err(io_err(&cfg.out_dir))?;
    }
    Ok(Outcome { lines, pass })
}

/// Configures the global rayon pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<(), String> {
    let n = match std::env::var(THREADS_ENV) {
        Err(_) => 0,
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV}: expected a thread count, got {s:?}"))?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
