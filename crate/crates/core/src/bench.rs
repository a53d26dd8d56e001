//! Batch runs and their summary statistics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::newton::{solve, SolverConfig};
use crate::par::{map_slice, Exec};
use crate::saddle::ProblemSpec;

/// Default shift ζ₀ (seconds) of the shifted geometric mean.
pub const DEFAULT_SHIFT: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct BenchInstance {
    pub id: String,
    pub family: String,
    pub spec: ProblemSpec,
}

/// Outcome of one solve in a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub family: String,
    pub m: usize,
    pub n: usize,
    pub time: f64,
    pub iterations: usize,
    pub status: String,
    pub eta1: f64,
    pub eta2: f64,
    pub eta_g: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    pub obj_p: f64,
    pub obj_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    /// A record for an instance that could not be run at all.
    pub fn failed(id: &str, family: &str, error: String) -> Self {
        RunRecord {
            id: id.into(),
            family: family.into(),
            m: 0,
            n: 0,
            time: 0.0,
            iterations: 0,
            status: "error".into(),
            eta1: f64::INFINITY,
            eta2: f64::INFINITY,
            eta_g: f64::INFINITY,
            eta_p: f64::INFINITY,
            eta_d: f64::INFINITY,
            obj_p: f64::NAN,
            obj_d: f64::NAN,
            error: Some(error),
        }
    }

    /// min(η₁, η_g) < 1e-2
    pub fn success_loose(&self) -> bool {
        self.eta1.min(self.eta_g) < 1e-2
    }

    /// η₁ < 1e-4
    pub fn success_tight(&self) -> bool {
        self.eta1 < 1e-4
    }
}

/// `(Π (t_i + shift))^{1/n} − shift`; zero for an empty list.
pub fn shifted_geomean(times: &[f64], shift: f64) -> f64 {
    match times.len() {
        0 => 0.0,
        1 => times[0],
        n if shift > 0.0 => {
            // factoring out the shift keeps all-equal inputs exact
            let prod: f64 = times.iter().map(|t| 1.0 + t / shift).product();
            let g = if prod.is_finite() && prod > 0.0 {
                prod.powf(1.0 / n as f64)
            } else {
                (times.iter().map(|t| (1.0 + t / shift).ln()).sum::<f64>() / n as f64).exp()
            };
            shift * g - shift
        }
        n => (times.iter().map(|t| t.ln()).sum::<f64>() / n as f64).exp(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub count: usize,
    pub shift: f64,
    pub geomean_time: f64,
    pub success_1e2: usize,
    pub success_1e4: usize,
    pub errors: usize,
}

/// Aggregates records; the result does not depend on their order.
pub fn summarize(records: &[RunRecord], shift: f64) -> BenchSummary {
    let mut times: Vec<f64> = records.iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    BenchSummary {
        count: records.len(),
        shift,
        geomean_time: shifted_geomean(&times, shift),
        success_1e2: records.iter().filter(|r| r.success_loose()).count(),
        success_1e4: records.iter().filter(|r| r.success_tight()).count(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
    }
}

pub fn run_one(inst: &BenchInstance, cfg: &SolverConfig) -> RunRecord {
    let start = Instant::now();
    match solve(&inst.spec, None, cfg) {
        Ok(rep) => RunRecord {
            id: inst.id.clone(),
            family: inst.family.clone(),
            m: inst.spec.m(),
            n: inst.spec.order(),
            time: start.elapsed().as_secs_f64(),
            iterations: rep.iterations,
            status: rep.status.as_str().into(),
            eta1: rep.kkt.eta1,
            eta2: rep.kkt.eta2,
            eta_g: rep.kkt.eta_g,
            eta_p: rep.kkt.eta_p,
            eta_d: rep.kkt.eta_d,
            obj_p: rep.kkt.obj_p,
            obj_d: rep.kkt.obj_d,
            error: rep.failure,
        },
        Err(e) => RunRecord::failed(&inst.id, &inst.family, e.to_string()),
    }
}

/// Solves every instance, fanning out over instances when `exec` allows.
/// Records come back in input order.
pub fn run_batch(instances: &[BenchInstance], cfg: &SolverConfig, exec: Exec) -> Vec<RunRecord> {
    map_slice(exec, instances, |inst| run_one(inst, cfg))
}
