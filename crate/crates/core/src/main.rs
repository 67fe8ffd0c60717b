use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsbt::cli::{self, Overrides};

/// Davey-Stewartson soliton generator and verifier.
///
/// Worker threads: set DSBT_THREADS (default: all available cores).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write field grids (fields_n<k>.csv) and a manifest.
    Generate(Common),
    /// Run the verification checks and write report.txt.
    Verify(Common),
    /// Compare the recursion with the reduced-case product formula.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Chain depth, overriding `output.depths`.
    #[arg(long)]
    depth: Option<usize>,
    /// Tolerance override, e.g. `--tolerance pde=2e-5`. Repeatable.
    #[arg(long = "tolerance", value_parser = cli::parse_tolerance)]
    tolerances: Vec<(String, f64)>,
}

type Runner = fn(&dsbt::config::RunConfig) -> Result<cli::Outcome, cli::CliError>;

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Err(e) = cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (common, run): (&Common, Runner) = match &args.command {
        Command::Generate(c) => (c, cli::cmd_generate),
        Command::Verify(c) => (c, cli::cmd_verify),
        Command::Compare(c) => (c, cli::cmd_compare),
    };
    let ov = Overrides {
        out: common.out.clone(),
        depth: common.depth,
        tolerances: common.tolerances.clone(),
    };
    let result = cli::load_config(&common.config, &ov).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
