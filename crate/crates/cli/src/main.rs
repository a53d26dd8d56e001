//! `ssncp` command-line front end.
//!
//! Exit codes: 0 optimal, 1 budget exhausted, 2 bad input or arguments,
//! 3 numerical failure.

mod bench;
mod generate;
mod input;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OPTIMAL: u8 = 0;
pub const EXIT_BUDGET: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ssncp", version, about = "Semismooth Newton solver for semidefinite programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write a JSON report.
    Solve(SolveArgs),
    /// Write test instances as SDPA files with JSON sidecars.
    Generate(generate::GenerateArgs),
    /// Solve a batch of instances and summarize times and success counts.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// SDPA sparse format; a `<stem>.json` sidecar may add X ≥ 0
    Sdpa,
    /// Edge list, Lovász theta SDP
    Theta,
    /// Edge list, theta with X ≥ 0
    Thetaplus,
    /// Biq Mac instance, doubly nonnegative relaxation
    Biq,
    /// Affinity matrix CSV, relaxed clustering (needs --clusters)
    Rcp,
}

/// Solver flags shared by `solve` and `bench`.
#[derive(Args, Clone, Debug)]
pub struct SolverFlags {
    /// Stopping tolerance on η₁ (η₂ when X ≥ 0 is imposed).
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Penalty parameter σ.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Enable the correction step with thresholds `theta,l,rho`.
    #[arg(long, value_name = "THETA,L,RHO", value_parser = parse_triple)]
    pub correction: Option<(f64, f64, f64)>,
    /// ‖F‖ below which the correction step is applied.
    #[arg(long, default_value_t = 1e-3)]
    pub correction_below: f64,
    /// Rescale b and C to unit norm before solving.
    #[arg(long)]
    pub rescale: bool,
}

impl SolverFlags {
    pub fn config(&self) -> ssncp::SolverConfig {
        let mut cfg = ssncp::SolverConfig {
            tol: self.tol,
            sigma: self.sigma,
            max_iter: self.max_iter,
            max_time: self.max_time,
            rescale: self.rescale,
            ..Default::default()
        };
        if let Some((theta, l, rho)) = self.correction {
            cfg.correction = ssncp::newton::CorrectionConfig::with_thresholds(theta, l, rho);
            cfg.correction.activation = self.correction_below;
        }
        cfg
    }
}

fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        [a] => Ok((a, a, a)),
        _ => Err("expected THETA,L,RHO or a single value".into()),
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Instance file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Sdpa)]
    pub format: InputFormat,
    /// Impose X ≥ 0 on an SDPA instance.
    #[arg(long)]
    pub nonneg: bool,
    /// Cluster count for --format rcp.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Per-iteration CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// JSON report (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include x, y, z, s in the report.
    #[arg(long)]
    pub with_solution: bool,
    /// Start from a seeded random perturbation of the default point.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Caps the global thread pool at `SSNCP_THREADS` when set.
fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SSNCP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("SSNCP_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("SSNCP_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    let code = match cli.command {
        Command::Solve(a) => solve::run(&a),
        Command::Generate(a) => generate::run(&a),
        Command::Bench(a) => bench::run(&a),
    };
    ExitCode::from(code)
}
