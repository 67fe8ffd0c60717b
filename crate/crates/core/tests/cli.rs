use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsbt::cli::read_fields_csv;

const SEED: &str = r#"
[seed]
q0 = [0.6, 0.1]
r0 = [-0.2, 0.3]
m0 = [1.0, 0.3]
n0 = [-0.6, 0.2]
alpha = [0.2, 0.0]
beta = [-0.1, 0.0]
k = [0.5, 0.0]
background = [0.05, 0.0]
"#;

const REDUCED_STEP: &str = r#"
[[steps]]
lambda = [1.2, 0.3]
lambda_lp = [0.7, 0.0]
a = [1.0, 0.0]
f11 = [0.2, 0.0]
f22 = [1.0, 0.0]
m1 = [-0.16, -0.285]
m2p = [-0.3, 0.0]
"#;

const GRID: &str = r#"
[grid]
x = [-1.0, 1.0]
y = [-1.0, 1.0]
nx = 12
ny = 10
t = 0.2
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Run { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, cmd: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dsbt"))
            .arg(cmd)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out())
            .args(extra)
            .env("DSBT_THREADS", "2")
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn zero_steps_generate_constant_fields() {
    let run = Run::new(&format!("{SEED}{GRID}"));
    let o = run.exec("generate", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let f = read_fields_csv(&run.out().join("fields_n0.csv")).unwrap();
    assert_eq!(f.q.len(), 12 * 10);
    assert!(f.q.iter().all(|&q| q == dsbt::algebra::c(0.6, 0.1)));
    assert!(f.r.iter().all(|&r| r == dsbt::algebra::c(-0.2, 0.3)));
    assert!(f
        .a1
        .iter()
        .chain(&f.a2)
        .all(|&a| a == dsbt::algebra::re(0.05)));
    // y is the outer loop
    assert_eq!((f.x[0], f.y[0]), (-1.0, -1.0));
    assert_eq!(f.y[1], -1.0);
    assert!(run.out().join("manifest.toml").exists());
}

#[test]
fn zero_steps_verify_passes() {
    let run = Run::new(&format!("{SEED}{GRID}"));
    let o = run.exec("verify", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read(&run.out().join("report.txt"));
    assert!(report.lines().count() >= 4);
    assert!(
        report.lines().all(|l| l.contains("status=PASS")),
        "{report}"
    );
}

#[test]
fn missing_lambda_lp_is_a_config_error() {
    let run = Run::new(&format!(
        "{SEED}{}{GRID}",
        REDUCED_STEP.replace("lambda_lp = [0.7, 0.0]\n", "")
    ));
    let o = run.exec("generate", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("steps[0].lambda_lp"), "{}", stderr(&o));
}

#[test]
fn unreadable_config_and_bad_flags() {
    let run = Run::new(&format!("{SEED}{GRID}"));
    let o = Command::new(env!("CARGO_BIN_EXE_dsbt"))
        .args(["verify", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run.exec("verify", &["--tolerance", "nonsense=1"])), 2);
    assert_eq!(code(&run.exec("generate", &["--depth", "3"])), 2);
}

#[test]
fn corrupted_seed_fails_spatial_lax_check() {
    let raw = SEED.replace(
        "background = [0.05, 0.0]",
        "mode = \"raw\"\na = [-0.1, -0.05]\nb = [0.1, -0.15]\na10 = [0.05, 0.0]\na20 = [0.05, 0.0]",
    );
    let run = Run::new(&format!("{raw}{GRID}\n[verify]\nchecks = [\"lax\"]\n"));
    let o = run.exec("verify", &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let report = read(&run.out().join("report.txt"));
    assert!(report
        .lines()
        .any(|l| l.starts_with("check=lax_spatial_n0") && l.contains("status=FAIL")));
}

#[test]
fn tolerance_override_changes_outcome() {
    let run = Run::new(&format!("{SEED}{GRID}\n[verify]\nchecks = [\"jets\"]\n"));
    assert_eq!(code(&run.exec("verify", &[])), 0);
    assert_eq!(code(&run.exec("verify", &["--tolerance", "jet=1e-30"])), 1);
}

#[test]
fn reduced_step_generate_matches_compact_formula() {
    use dsbt::fields::{compact_q, CompactParams, CompactReading};
    let run = Run::new(&format!("{SEED}{REDUCED_STEP}{GRID}"));
    assert_eq!(code(&run.exec("generate", &[])), 0);
    let cfg = dsbt::config::RunConfig::load(&run.dir.path().join("run.toml")).unwrap();
    let cp = CompactParams::from_steps(&cfg.seed, &cfg.steps, &[]).unwrap();
    let f = read_fields_csv(&run.out().join("fields_n1.csv")).unwrap();
    for k in 0..f.q.len() {
        let qc = compact_q(&cp, 1, f.x[k], f.y[k], 0.2, CompactReading::default()).unwrap();
        assert!((qc - f.q[k]).norm() <= 1e-9 * f.q[k].norm());
    }
}

#[test]
fn compare_reduced_and_rejects_general() {
    let run = Run::new(&format!("{SEED}{REDUCED_STEP}{GRID}"));
    let o = run.exec("compare", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&run.out().join("compare.txt"));
    assert!(
        text.contains("resolved n=1 reading=m2_from_F22+mbar_plus"),
        "{text}"
    );

    let general = REDUCED_STEP.replace("f22 = [1.0, 0.0]", "f22 = [1.0, 0.0]\nf12 = [0.3, 0.0]");
    let run = Run::new(&format!("{SEED}{general}{GRID}"));
    let o = run.exec("compare", &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("steps[0]"));
}

#[test]
fn one_step_algebraic_checks_pass() {
    let run = Run::new(&format!(
        "{SEED}{REDUCED_STEP}{GRID}\n[verify]\nchecks = [\"identities\", \"jets\"]\n"
    ));
    let o = run.exec("verify", &[]);
    assert_eq!(code(&o), 0, "{}", read(&run.out().join("report.txt")));
}

#[test]
fn generate_is_byte_deterministic() {
    let run = Run::new(&format!("{SEED}{REDUCED_STEP}{GRID}"));
    assert_eq!(code(&run.exec("generate", &[])), 0);
    let first = std::fs::read(run.out().join("fields_n1.csv")).unwrap();
    let manifest = read(&run.out().join("manifest.toml"));
    let o = Command::new(env!("CARGO_BIN_EXE_dsbt"))
        .args(["generate", "--config"])
        .arg(run.dir.path().join("run.toml"))
        .arg("--out")
        .arg(run.out())
        .env("DSBT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(
        first,
        std::fs::read(run.out().join("fields_n1.csv")).unwrap()
    );
    assert_eq!(manifest, read(&run.out().join("manifest.toml")));
}

#[test]
fn wrong_delta_override_breaks_compare_match() {
    let off = REDUCED_STEP.replace("m2p = [-0.3, 0.0]", "m2p = [-0.3, 0.0]\ndelta = [0.0, 4.0]");
    let run = Run::new(&format!("{SEED}{off}{GRID}"));
    let o = run.exec("compare", &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let text = read(&run.out().join("compare.txt"));
    assert!(text.contains("resolved n=1 reading=none"), "{text}");
}
