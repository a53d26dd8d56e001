use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use ssncp::bench::{run_batch, summarize, BenchInstance, BenchSummary, RunRecord, DEFAULT_SHIFT};
use ssncp::Exec;

use crate::{input, InputFormat, SolverFlags, EXIT_INPUT, EXIT_OPTIMAL};

pub const BENCH_SCHEMA: &str = "ssncp-bench/1";

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Instance files or directories (every `.dat-s` file inside, sorted).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Sdpa)]
    pub format: InputFormat,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Instances solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Shift ζ₀ of the geometric mean, in seconds.
    #[arg(long, default_value_t = DEFAULT_SHIFT)]
    pub shift: f64,
    /// Records and summary as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Records as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    schema: &'static str,
    records: &'a [RunRecord],
    summary: &'a BenchSummary,
}

/// A record with every column present, as CSV needs.
#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    family: &'a str,
    m: usize,
    n: usize,
    time: f64,
    iterations: usize,
    status: &'a str,
    eta1: f64,
    eta2: f64,
    eta_g: f64,
    eta_p: f64,
    eta_d: f64,
    obj_p: f64,
    obj_d: f64,
    error: &'a str,
}

impl<'a> From<&'a RunRecord> for CsvRow<'a> {
    fn from(r: &'a RunRecord) -> Self {
        CsvRow {
            id: &r.id,
            family: &r.family,
            m: r.m,
            n: r.n,
            time: r.time,
            iterations: r.iterations,
            status: &r.status,
            eta1: r.eta1,
            eta2: r.eta2,
            eta_g: r.eta_g,
            eta_p: r.eta_p,
            eta_d: r.eta_d,
            obj_p: r.obj_p,
            obj_d: r.obj_d,
            error: r.error.as_deref().unwrap_or(""),
        }
    }
}

fn expand(inputs: &[PathBuf]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(".dat-s"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn instance_id(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn run(a: &BenchArgs) -> u8 {
    let files = match expand(&a.inputs) {
        Ok(f) if !f.is_empty() => f,
        Ok(_) => {
            eprintln!("error: no instances found");
            return EXIT_INPUT;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    if a.jobs == 0 || a.shift.is_nan() || a.shift < 0.0 {
        eprintln!("error: --jobs must be positive and --shift nonnegative");
        return EXIT_INPUT;
    }
    let mut cfg = a.solver.config();
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }

    // instances that fail to load are recorded, not fatal
    let mut slots: Vec<Option<RunRecord>> = Vec::with_capacity(files.len());
    let mut instances = Vec::new();
    let mut positions = Vec::new();
    for f in &files {
        let id = instance_id(f);
        match input::load(f, a.format, false, a.clusters) {
            Ok(l) => {
                positions.push(slots.len());
                slots.push(None);
                instances.push(BenchInstance {
                    id,
                    family: l.family,
                    spec: l.spec,
                });
            }
            Err(e) => slots.push(Some(RunRecord::failed(&id, "unknown", e.to_string()))),
        }
    }

    let solved = if a.jobs > 1 {
        // fan out over instances; each solve stays single-threaded
        cfg.exec = Exec::Sequential;
        match rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build() {
            Ok(pool) => pool.install(|| run_batch(&instances, &cfg, Exec::Parallel)),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INPUT;
            }
        }
    } else {
        run_batch(&instances, &cfg, Exec::Sequential)
    };
    for (pos, rec) in positions.into_iter().zip(solved) {
        slots[pos] = Some(rec);
    }
    let records: Vec<RunRecord> = slots.into_iter().map(|r| r.expect("every slot filled")).collect();
    let summary = summarize(&records, a.shift);

    println!(
        "{:<28} {:>5} {:>5} {:>9} {:>6} {:>10} {:>10} {:>10}  status",
        "instance", "m", "n", "time", "iter", "eta1", "eta2", "eta_g"
    );
    for r in &records {
        println!(
            "{:<28} {:>5} {:>5} {:>9.3} {:>6} {:>10.2e} {:>10.2e} {:>10.2e}  {}",
            r.id, r.m, r.n, r.time, r.iterations, r.eta1, r.eta2, r.eta_g, r.status
        );
    }
    println!(
        "{} instances, shifted geomean {:.4}s (shift {}), success 1e-2: {}, success 1e-4: {}, errors: {}",
        summary.count, summary.geomean_time, summary.shift, summary.success_1e2, summary.success_1e4, summary.errors
    );

    if let Some(path) = &a.out {
        let out = BenchOutput {
            schema: BENCH_SCHEMA,
            records: &records,
            summary: &summary,
        };
        let res = serde_json::to_string_pretty(&out)
            .map_err(|e| e.to_string())
            .and_then(|j| std::fs::write(path, j + "\n").map_err(|e| e.to_string()));
        if let Err(e) = res {
            eprintln!("error: writing {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    if let Some(path) = &a.csv {
        let res = csv::Writer::from_path(path).map_err(|e| e.to_string()).and_then(|mut w| {
            for r in &records {
                w.serialize(CsvRow::from(r)).map_err(|e| e.to_string())?;
            }
            w.flush().map_err(|e| e.to_string())
        });
        if let Err(e) = res {
            eprintln!("error: writing {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    EXIT_OPTIMAL
}
