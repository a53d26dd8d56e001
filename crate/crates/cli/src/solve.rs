use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use ssncp::diagnostics::KktReport;
use ssncp::newton::{StepCounters, TraceRecord};
use ssncp::{Iterate, ProblemSpec, SolveReport, SolveStatus, SolverConfig, SsnError, SymBlockMat};

use crate::{input, SolveArgs, EXIT_BUDGET, EXIT_INPUT, EXIT_NUMERIC, EXIT_OPTIMAL};

pub const REPORT_SCHEMA: &str = "ssncp-report/1";

#[derive(Serialize)]
struct Solution<'a> {
    x: &'a SymBlockMat,
    y: &'a [f64],
    z: &'a SymBlockMat,
    s: &'a SymBlockMat,
}

#[derive(Serialize)]
struct Report<'a> {
    schema: &'static str,
    input: String,
    family: &'a str,
    m: usize,
    n: usize,
    blocks: Vec<usize>,
    status: &'static str,
    iterations: usize,
    time: f64,
    residual: f64,
    initial_residual: f64,
    kkt: &'a KktReport,
    counters: &'a StepCounters,
    config: &'a SolverConfig,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<Solution<'a>>,
}

/// One row of the trace CSV.
#[derive(Serialize)]
struct TraceRow {
    k: usize,
    residual: f64,
    tau: f64,
    branch: &'static str,
    inner_iters: usize,
    time: f64,
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    for t in trace {
        w.serialize(TraceRow {
            k: t.k,
            residual: t.residual,
            tau: t.tau,
            branch: t.branch.as_str(),
            inner_iters: t.inner_iters,
            time: t.time,
        })
        .map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

/// The default start, with y and x perturbed by 0.1·N(0, 1) noise.
fn seeded_start(p: &ProblemSpec, seed: u64) -> Result<Iterate, SsnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Iterate::initial(p, None)?;
    for v in w.y.iter_mut() {
        *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    let noise: Vec<f64> = (0..w.x.svec_len()).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    w.x += &SymBlockMat::from_svec(&w.x.block_dims(), &noise)?;
    Ok(w)
}

pub fn exit_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => EXIT_OPTIMAL,
        SolveStatus::MaxIter | SolveStatus::MaxTime => EXIT_BUDGET,
        SolveStatus::NumericFailure => EXIT_NUMERIC,
    }
}

/// Input errors map to 2, everything else raised by the solver to 3.
pub fn error_code(e: &SsnError) -> u8 {
    match e {
        SsnError::Parse { .. }
        | SsnError::Unsupported { .. }
        | SsnError::Io(_)
        | SsnError::Json(_)
        | SsnError::Dimension(_)
        | SsnError::InvalidParameter(_) => EXIT_INPUT,
        SsnError::NonFinite(_) | SsnError::InnerSolve { .. } => EXIT_NUMERIC,
    }
}

fn report_json(a: &SolveArgs, family: &str, p: &ProblemSpec, cfg: &SolverConfig, rep: &SolveReport) -> serde_json::Result<String> {
    let r = Report {
        schema: REPORT_SCHEMA,
        input: a.input.display().to_string(),
        family,
        m: p.m(),
        n: p.order(),
        blocks: p.block_dims(),
        status: rep.status.as_str(),
        iterations: rep.iterations,
        time: rep.time,
        residual: rep.residual,
        initial_residual: rep.initial_residual,
        kkt: &rep.kkt,
        counters: &rep.counters,
        config: cfg,
        seed: a.seed,
        failure: rep.failure.as_deref(),
        solution: a.with_solution.then_some(Solution {
            x: &rep.x,
            y: &rep.y,
            z: &rep.z,
            s: &rep.s,
        }),
    };
    serde_json::to_string_pretty(&r)
}

pub fn run(a: &SolveArgs) -> u8 {
    let loaded = match input::load(&a.input, a.format, a.nonneg, a.clusters) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", a.input.display());
            return EXIT_INPUT;
        }
    };
    let p = &loaded.spec;
    let cfg = a.solver.config();
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    let w0 = match a.seed.map(|s| seeded_start(p, s)).transpose() {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    let rep = match ssncp::solve(p, w0.as_ref(), &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    if let Some(path) = &a.trace {
        if let Err(e) = write_trace(path, &rep.trace) {
            eprintln!("error: writing {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    let json = match report_json(a, &loaded.family, p, &cfg, &rep) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERIC;
        }
    };
    match &a.report {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json + "\n") {
                eprintln!("error: writing {}: {e}", path.display());
                return EXIT_INPUT;
            }
            let k = &rep.kkt;
            println!(
                "{}: {} after {} iterations, {:.3}s, metric {:.3e}, obj_p {:.10e}, obj_d {:.10e}",
                a.input.display(),
                rep.status.as_str(),
                rep.iterations,
                rep.time,
                k.stopping_metric(),
                k.obj_p,
                k.obj_d
            );
        }
        None => println!("{json}"),
    }
    if let Some(f) = &rep.failure {
        eprintln!("solver stopped: {f}");
    }
    exit_code(rep.status)
}
