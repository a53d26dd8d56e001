//! The regularized semismooth Newton loop.
//!
//! Each outer step tries `τ = κγⁱ‖F(w)‖` for `i = 0..=i_max`, solving the
//! regularized system `(J + τI) d = −F(w)` inexactly, optionally correcting
//! the trial point, and accepting it under the nonmonotone test
//!
//! ```text
//! ‖F(w̃)‖ ≤ ν · max_{window} ‖F(w^j)‖ + ς_k
//! ```
//!
//! If every trial fails, a step with `τ = κ₁ k^β` is taken unconditionally.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{compute_kkt_full, KktReport};
use crate::error::{Result, SsnError};
use crate::jacobian::{apply_dktau_inv, JacElement, TauVec};
use crate::linalg::{sym_eig_with, SymBlockMat};
use crate::par::{map_indexed, Exec};
use crate::saddle::{eval_f_with, spectral_argument, BoxSet, FEval, HSpec, Iterate, ProblemSpec, ResidualVec};

/// Thresholds of the correction step and the residual level below which it
/// is switched on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub enabled: bool,
    pub theta: f64,
    pub l: f64,
    pub rho: f64,
    pub activation: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            enabled: false,
            theta: 0.05,
            l: 0.05,
            rho: 0.05,
            activation: 1e-3,
        }
    }
}

impl CorrectionConfig {
    pub fn with_thresholds(theta: f64, l: f64, rho: f64) -> Self {
        CorrectionConfig {
            enabled: true,
            theta,
            l,
            rho,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub sigma: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub i_max: usize,
    pub nu: f64,
    pub beta: f64,
    pub kappa1: f64,
    pub zeta_window: usize,
    /// ς_k = c_ς k^{−5/3}; `None` means 1e-3·‖F(w⁰)‖.
    pub c_varsigma: Option<f64>,
    /// C_η in the inner tolerance; `None` means 1e-2·‖F(w⁰)‖.
    pub c_eta_outer: Option<f64>,
    pub c_eta: f64,
    pub eta_q: f64,
    pub correction: CorrectionConfig,
    pub tol: f64,
    pub max_iter: usize,
    /// Wall-clock budget in seconds.
    pub max_time: Option<f64>,
    /// CG iteration cap; `None` means 10·(m + n).
    pub inner_max_iter: Option<usize>,
    /// Largest reduced system solved densely when CG fails; 0 disables.
    pub dense_max: usize,
    /// Rescale b and c to unit norm before solving.
    pub rescale: bool,
    /// Keep every accepted iterate in the report.
    pub keep_iterates: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma: 1.0,
            kappa: 0.1,
            gamma: 10.0,
            i_max: 3,
            nu: 0.99,
            beta: 0.4,
            kappa1: 1.0,
            zeta_window: 5,
            c_varsigma: None,
            c_eta_outer: None,
            c_eta: 0.1,
            eta_q: 1.5,
            correction: CorrectionConfig::default(),
            tol: 1e-6,
            max_iter: 500,
            max_time: None,
            inner_max_iter: None,
            dense_max: DEFAULT_DENSE_MAX,
            rescale: false,
            keep_iterates: false,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SsnError::InvalidParameter(what.to_string()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.gamma > 1.0) {
            return bad("gamma must exceed 1");
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad("nu must lie in (0, 1)");
        }
        if !(self.beta > 1.0 / 3.0 && self.beta <= 1.0) {
            return bad("beta must lie in (1/3, 1]");
        }
        if !(self.kappa1 >= 1.0) {
            return bad("kappa1 must be at least 1");
        }
        if self.zeta_window == 0 {
            return bad("zeta_window must be positive");
        }
        if !(self.c_eta > 0.0 && self.eta_q > 0.0) {
            return bad("inner tolerance constants must be positive");
        }
        if self.c_varsigma.is_some_and(|c| !(c >= 0.0)) || self.c_eta_outer.is_some_and(|c| !(c > 0.0)) {
            return bad("schedule constants must be nonnegative");
        }
        let c = &self.correction;
        if !(c.theta >= 0.0 && c.l >= 0.0 && c.rho >= 0.0) {
            return bad("correction thresholds must be nonnegative");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    MaxTime,
    NumericFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::MaxTime => "max_time",
            SolveStatus::NumericFailure => "numeric_failure",
        }
    }
}

/// Which acceptance rule produced an iterate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// nonmonotone test passed for some τ = κγⁱ‖F‖
    #[serde(rename = "decrease-1")]
    Decrease1,
    /// fallback τ = κ₁ k^β, accepted unconditionally
    #[serde(rename = "decrease-2")]
    Decrease2,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Decrease1 => "decrease-1",
            Branch::Decrease2 => "decrease-2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based step index.
    pub k: usize,
    pub residual_before: f64,
    pub residual: f64,
    pub tau: f64,
    pub branch: Branch,
    /// Trial index i of the accepted direction (`i_max + 1` on the fallback).
    pub trial: usize,
    /// CG iterations summed over every trial of this step.
    pub inner_iters: usize,
    /// Achieved ‖η‖ of the accepted direction.
    pub eta: f64,
    pub eta_bound: f64,
    pub corrected: bool,
    /// Seconds since the solve started.
    pub time: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub decrease1: usize,
    pub decrease2: usize,
    pub corrections: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub residual: f64,
    pub initial_residual: f64,
    pub time: f64,
    pub kkt: KktReport,
    pub iterate: Iterate,
    pub x: SymBlockMat,
    pub y: Vec<f64>,
    pub z: SymBlockMat,
    pub s: SymBlockMat,
    pub counters: StepCounters,
    pub trace: Vec<TraceRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Iterate>,
    /// (b scale, c scale) when rescaling was on.
    pub scaling: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl SolveReport {
    /// η₁ when h is absent, η₂ otherwise.
    pub fn metric(&self) -> f64 {
        self.kkt.stopping_metric()
    }
}

// ---------------------------------------------------------------------------
// Newton system

/// Result of one inexact Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonDirection {
    pub d: Iterate,
    pub iterations: usize,
    /// ‖(J + τI)d + F‖, equal to the reduced-system CG residual.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewtonPath {
    /// Equality constraints and no h: CG on d_y only.
    Sdp,
    /// CG on (d_y, d_z), with d_z dropped when h is absent.
    General,
}

trait CgVec: Clone {
    fn dot(&self, o: &Self) -> f64;
    fn axpy(&mut self, a: f64, o: &Self);
    fn scale(&mut self, a: f64);
    /// Orthonormal coordinates.
    fn flat(&self) -> Vec<f64>;
    /// Inverse of `flat`, shaped like `self`.
    fn unflat(&self, v: &[f64]) -> Self;
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl CgVec for Vec<f64> {
    fn dot(&self, o: &Self) -> f64 {
        vdot(self, o)
    }
    fn axpy(&mut self, a: f64, o: &Self) {
        self.iter_mut().zip(o).for_each(|(s, v)| *s += a * v);
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
    fn flat(&self) -> Vec<f64> {
        self.clone()
    }
    fn unflat(&self, v: &[f64]) -> Self {
        v.to_vec()
    }
}

#[derive(Clone, Debug)]
struct RedVec {
    y: Vec<f64>,
    z: Option<SymBlockMat>,
}

impl CgVec for RedVec {
    fn dot(&self, o: &Self) -> f64 {
        vdot(&self.y, &o.y) + self.z.as_ref().zip(o.z.as_ref()).map_or(0.0, |(a, b)| a.dot(b))
    }
    fn axpy(&mut self, a: f64, o: &Self) {
        self.y.axpy(a, &o.y);
        if let (Some(z), Some(oz)) = (self.z.as_mut(), o.z.as_ref()) {
            z.axpy(a, oz);
        }
    }
    fn scale(&mut self, a: f64) {
        self.y.scale(a);
        if let Some(z) = self.z.as_mut() {
            z.scale_mut(a);
        }
    }
    fn flat(&self) -> Vec<f64> {
        let mut v = self.y.clone();
        if let Some(z) = &self.z {
            v.extend(z.svec());
        }
        v
    }
    fn unflat(&self, v: &[f64]) -> Self {
        let m = self.y.len();
        RedVec {
            y: v[..m].to_vec(),
            z: self.z.as_ref().map(|z| SymBlockMat::from_svec(&z.block_dims(), &v[m..]).expect("svec length")),
        }
    }
}

// How often the recurrence residual is replaced by the true one.
const CG_REFRESH: usize = 50;

/// Preconditioned conjugate gradients from a zero start; stops once the
/// unpreconditioned residual satisfies ‖b − Bx‖ ≤ tol.
fn pcg<V: CgVec>(
    apply: impl Fn(&V) -> V,
    precond: impl Fn(&V) -> V,
    b: &V,
    tol: f64,
    max_iter: usize,
) -> Result<(V, usize, f64)> {
    let mut x = b.clone();
    x.scale(0.0);
    let mut r = b.clone();
    let mut rn = r.dot(&r).sqrt();
    if rn <= tol {
        return Ok((x, 0, rn));
    }
    let mut zr = precond(&r);
    let mut p = zr.clone();
    let mut rz = r.dot(&zr);
    for it in 1..=max_iter {
        let bp = apply(&p);
        let pbp = p.dot(&bp);
        if !(pbp > 0.0 && pbp.is_finite()) {
            break;
        }
        let alpha = rz / pbp;
        x.axpy(alpha, &p);
        if it % CG_REFRESH == 0 {
            r = b.clone();
            r.axpy(-1.0, &apply(&x));
        } else {
            r.axpy(-alpha, &bp);
        }
        rn = r.dot(&r).sqrt();
        if rn <= tol {
            // the recurrence drifts; confirm against the true residual
            let mut tr = b.clone();
            tr.axpy(-1.0, &apply(&x));
            let tn = tr.dot(&tr).sqrt();
            if tn <= tol {
                return Ok((x, it, tn));
            }
            r = tr;
            zr = precond(&r);
            p = zr.clone();
            rz = r.dot(&zr);
            continue;
        }
        zr = precond(&r);
        let rz_new = r.dot(&zr);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &zr);
    }
    let mut tr = b.clone();
    tr.axpy(-1.0, &apply(&x));
    Err(SsnError::InnerSolve {
        iterations: max_iter,
        residual: tr.dot(&tr).sqrt(),
        target: tol,
    })
}

/// Default size limit of the dense fallback.
pub const DEFAULT_DENSE_MAX: usize = 2500;

/// Caps on the inner solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InnerLimits {
    pub max_iter: usize,
    /// Reduced systems up to this size are factorized when CG fails.
    pub dense_max: usize,
}

impl InnerLimits {
    pub fn cg_only(max_iter: usize) -> Self {
        InnerLimits { max_iter, dense_max: 0 }
    }
}

/// PCG, then a dense Cholesky (LU if that fails) with one refinement step
/// when CG runs out of iterations on a small enough system.
fn solve_spd<V: CgVec + Send + Sync>(
    apply: impl Fn(&V) -> V + Sync,
    precond: impl Fn(&V) -> V,
    b: &V,
    tol: f64,
    limits: InnerLimits,
    exec: Exec,
) -> Result<(V, usize, f64)> {
    let err = match pcg(&apply, precond, b, tol, limits.max_iter) {
        Ok(r) => return Ok(r),
        Err(e) => e,
    };
    let bf = b.flat();
    let n = bf.len();
    if n > limits.dense_max {
        return Err(err);
    }
    let cols = map_indexed(exec, n, 8, |j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        apply(&b.unflat(&e)).flat()
    });
    let mut m = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    m = (&m + m.transpose()) * 0.5;
    let solve = |rhs: &[f64]| -> Option<Vec<f64>> {
        let rhs = DVector::from_column_slice(rhs);
        let x = match m.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => m.clone().lu().solve(&rhs)?,
        };
        Some(x.as_slice().to_vec())
    };
    let Some(mut x) = solve(&bf) else { return Err(err) };
    let residual = |x: &[f64]| {
        let mut r = bf.clone();
        let bx = apply(&b.unflat(x)).flat();
        r.iter_mut().zip(&bx).for_each(|(r, v)| *r -= v);
        r
    };
    let r = residual(&x);
    if let Some(dx) = solve(&r) {
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    let r = residual(&x);
    let rn = vdot(&r, &r).sqrt();
    if !rn.is_finite() {
        return Err(err);
    }
    Ok((b.unflat(&x), limits.max_iter + n, rn))
}

/// Default CG cap 10·(m + n).
pub fn default_inner_cap(p: &ProblemSpec) -> usize {
    10 * (p.m() + p.order())
}

/// Solves `(J + τI) d = −F(w)` to ‖η‖ ≤ `inner_tol`, choosing the d_y-only
/// system for equality-constrained problems without h.
pub fn solve_newton_system(
    el: &JacElement,
    p: &ProblemSpec,
    tau: TauVec,
    rhs: &ResidualVec,
    inner_tol: f64,
) -> Result<NewtonDirection> {
    let path = if p.is_standard_sdp() { NewtonPath::Sdp } else { NewtonPath::General };
    let limits = InnerLimits {
        max_iter: default_inner_cap(p),
        dense_max: DEFAULT_DENSE_MAX,
    };
    solve_newton_system_with(el, p, tau, rhs, inner_tol, limits, path)
}

pub fn solve_newton_system_with(
    el: &JacElement,
    p: &ProblemSpec,
    tau: TauVec,
    rhs: &ResidualVec,
    inner_tol: f64,
    limits: InnerLimits,
    path: NewtonPath,
) -> Result<NewtonDirection> {
    for t in [tau.tau_y, tau.tau_z, tau.tau_x, tau.tau_u, tau.tau_q] {
        if !(t > 0.0 && t.is_finite()) {
            return Err(SsnError::InvalidParameter(format!("tau must be positive, got {t}")));
        }
    }
    match path {
        NewtonPath::Sdp => {
            if !p.is_standard_sdp() {
                return Err(SsnError::InvalidParameter("d_y-only system needs equality constraints and no h".into()));
            }
            solve_sdp_path(el, p, tau, rhs, inner_tol, limits)
        }
        NewtonPath::General => solve_general_path(el, p, tau, rhs, inner_tol, limits),
    }
}

fn solve_sdp_path(
    el: &JacElement,
    p: &ProblemSpec,
    tau: TauVec,
    f: &ResidualVec,
    inner_tol: f64,
    limits: InnerLimits,
) -> Result<NewtonDirection> {
    let exec = el.exec;
    let sbar = el.sigma_bar(tau.tau_x);
    let st = el.sigma_t(tau.tau_x);
    // (τ + A D̄_K A*) d_y = −F_y + A D_K (D_K^τ)⁻¹ F_x
    let apply = |v: &Vec<f64>| {
        let g = p.a.adjoint_unchecked(v, exec);
        let t = el.apply_weighted(&sbar, &g);
        let mut out = p.a.apply_unchecked(&t, exec);
        out.axpy(tau.tau_y, v);
        out
    };
    let mut b = p.a.apply_unchecked(&el.apply_weighted(&st, &f.fx), exec);
    b.axpy(-1.0, &f.fy);
    let dy_diag: Vec<f64> = el.constraint_diag(&sbar, &p.a).iter().map(|d| 1.0 / (d + tau.tau_y)).collect();
    let precond = |v: &Vec<f64>| v.iter().zip(&dy_diag).map(|(a, d)| a * d).collect::<Vec<f64>>();
    let (dy, iterations, residual) = solve_spd(apply, precond, &b, inner_tol, limits, exec)?;

    let g = p.a.adjoint_unchecked(&dy, exec);
    let mut dx = apply_dktau_inv(el, tau.tau_x, &f.fx);
    dx.scale_mut(-1.0);
    dx += &el.apply_weighted(&st, &g);
    let du = f.fu.iter().map(|v| -v / (1.0 / el.sigma + tau.tau_u)).collect();
    let dims = p.block_dims();
    Ok(NewtonDirection {
        d: Iterate {
            y: dy,
            z: SymBlockMat::zeros(&dims),
            x: dx,
            u: du,
            q: SymBlockMat::zeros(&dims),
        },
        iterations,
        residual,
    })
}

fn solve_general_path(
    el: &JacElement,
    p: &ProblemSpec,
    tau: TauVec,
    f: &ResidualVec,
    inner_tol: f64,
    limits: InnerLimits,
) -> Result<NewtonDirection> {
    let exec = el.exec;
    let s = el.sigma;
    let has_z = !el.h_absent;
    let sbar = el.sigma_bar(tau.tau_x);
    let st = el.sigma_t(tau.tau_x);
    // D̄ = σD + D(D^τ)⁻¹D and D(D^τ)⁻¹ for 0/1 masks
    let dbar_q: Vec<f64> = el.dq_mask.iter().map(|m| m * (s + 1.0 / tau.tau_u)).collect();
    let dbar_h = el.dh_mask.scaled(s + 1.0 / tau.tau_q);

    let apply = |v: &RedVec| {
        let mut g = p.a.adjoint_unchecked(&v.y, exec);
        if let Some(z) = &v.z {
            g += z;
        }
        let t = el.apply_weighted(&sbar, &g);
        let mut y = p.a.apply_unchecked(&t, exec);
        for i in 0..y.len() {
            y[i] += (tau.tau_y + dbar_q[i]) * v.y[i];
        }
        let z = v.z.as_ref().map(|z| {
            let mut out = t.clone();
            out += &dbar_h.hadamard(z);
            out.axpy(tau.tau_z, z);
            out
        });
        RedVec { y, z }
    };

    let sfx = el.apply_weighted(&st, &f.fx);
    let mut by = p.a.apply_unchecked(&sfx, exec);
    for (i, b) in by.iter_mut().enumerate() {
        *b -= f.fy[i] + el.dq_mask[i] / tau.tau_u * f.fu[i];
    }
    let bz = has_z.then(|| {
        let mut b = sfx.clone();
        b -= &f.fz;
        b -= &el.dh_mask.hadamard(&f.fq).scaled(1.0 / tau.tau_q);
        b
    });
    let b = RedVec { y: by, z: bz };
    let dy_inv: Vec<f64> = el
        .constraint_diag(&sbar, &p.a)
        .iter()
        .zip(&dbar_q)
        .map(|(d, q)| 1.0 / (d + q + tau.tau_y))
        .collect();
    let dz_inv = has_z.then(|| {
        let mut d = el.weighted_diag(&sbar);
        d += &dbar_h;
        d.map(|v| 1.0 / (v + tau.tau_z))
    });
    let precond = |v: &RedVec| RedVec {
        y: v.y.iter().zip(&dy_inv).map(|(a, d)| a * d).collect(),
        z: v.z.as_ref().zip(dz_inv.as_ref()).map(|(z, d)| z.hadamard(d)),
    };
    let (sol, iterations, residual) = solve_spd(apply, precond, &b, inner_tol, limits, exec)?;

    let dims = p.block_dims();
    let dy = sol.y;
    let dz = sol.z.unwrap_or_else(|| SymBlockMat::zeros(&dims));
    let mut g = p.a.adjoint_unchecked(&dy, exec);
    if has_z {
        g += &dz;
    }
    let mut dx = apply_dktau_inv(el, tau.tau_x, &f.fx);
    dx.scale_mut(-1.0);
    dx += &el.apply_weighted(&st, &g);
    let du = (0..dy.len())
        .map(|i| {
            let mask = el.dq_mask[i];
            (-f.fu[i] - mask * dy[i]) / (1.0 / s + tau.tau_u - mask / s)
        })
        .collect();
    let dq = if has_z {
        let num = &f.fq.scaled(-1.0) - &el.dh_mask.hadamard(&dz);
        num.zip_map(&el.dh_mask, |a, m| a / (1.0 / s + tau.tau_q - m / s))
    } else {
        SymBlockMat::zeros(&dims)
    };
    Ok(NewtonDirection {
        d: Iterate {
            y: dy,
            z: dz,
            x: dx,
            u: du,
            q: dq,
        },
        iterations,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Correction step

/// Reference points and shifted residuals used by the correction step.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionQuantities {
    pub q_hat: SymBlockMat,
    pub u_hat: Vec<f64>,
    pub z_hat: SymBlockMat,
    pub y_hat: Vec<f64>,
    /// υ = q − q̂ − σ(z + ẑ)
    pub upsilon: SymBlockMat,
    /// ϑ = u − û − σ(y + ŷ)
    pub vartheta: Vec<f64>,
}

fn nearest(v: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if (v - lo).abs() <= (v - hi).abs() {
                lo
            } else {
                hi
            }
        }
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => f64::NAN,
    }
}

/// q̂, û are the nearest kinks of h and δ_Q; the matching boundary
/// subgradients ẑ, ŷ are zero for every box-type set.
pub fn correction_quantities(w: &Iterate, p: &ProblemSpec, sigma: f64) -> CorrectionQuantities {
    let q_hat = match p.h {
        HSpec::Absent => w.q.clone(),
        HSpec::Nonneg => w.q.scaled(0.0),
        HSpec::Box { lo, hi } => w.q.map(|v| nearest(v, lo, hi)),
    };
    let u_hat: Vec<f64> = (0..p.m()).map(|i| nearest(w.u[i], p.q.lo()[i], p.q.hi()[i])).collect();
    let z_hat = w.z.scaled(0.0);
    let y_hat = vec![0.0; p.m()];
    let mut upsilon = &w.q - &q_hat;
    upsilon.axpy(-sigma, &(&w.z + &z_hat));
    let vartheta = (0..p.m()).map(|i| w.u[i] - u_hat[i] - sigma * (w.y[i] + y_hat[i])).collect();
    CorrectionQuantities {
        q_hat,
        u_hat,
        z_hat,
        y_hat,
        upsilon,
        vartheta,
    }
}

/// The correction operator with thresholds θ, l, ρ.
///
/// Eigenvalues of `x + σ(A*y + z − c)` with |λ| < θ/2 are removed from x;
/// entries of q (coordinates of u) close to a kink are moved onto it. With
/// all thresholds zero the input is returned unchanged.
pub fn correction_apply(wbar: &Iterate, p: &ProblemSpec, sigma: f64, theta: f64, l: f64, rho: f64) -> Result<Iterate> {
    correction_apply_with(wbar, p, sigma, theta, l, rho, Exec::default())
}

pub fn correction_apply_with(
    wbar: &Iterate,
    p: &ProblemSpec,
    sigma: f64,
    theta: f64,
    l: f64,
    rho: f64,
    exec: Exec,
) -> Result<Iterate> {
    wbar.check_conforms(p)?;
    let mut w = wbar.clone();
    if theta > 0.0 {
        let m = spectral_argument(wbar, p, sigma, exec);
        let eig = sym_eig_with(&m, exec)?;
        let blocks = w.x.blocks_mut();
        for (k, b) in eig.blocks.iter().enumerate() {
            for (j, &lam) in b.values.iter().enumerate() {
                if lam.abs() < theta / 2.0 {
                    let v = b.vectors.column(j);
                    blocks[k].ger(-lam, &v, &v, 1.0);
                }
            }
            crate::linalg::symmetrize(&mut blocks[k]);
        }
    }
    let cq = correction_quantities(wbar, p, sigma);
    if !p.h.is_absent() {
        let zhat = &wbar.z - &cq.z_hat;
        let qhat = &wbar.q - &cq.q_hat;
        let dims = p.block_dims();
        let mut shift = SymBlockMat::zeros(&dims);
        {
            let sb = shift.blocks_mut();
            for k in 0..dims.len() {
                let (zb, qb, ub) = (zhat.block(k), qhat.block(k), cq.upsilon.block(k));
                for j in 0..dims[k] {
                    for i in 0..dims[k] {
                        if zb[(i, j)].abs() < l / (2.0 * sigma) && qb[(i, j)].abs() < l / 2.0 {
                            sb[k][(i, j)] = ub[(i, j)];
                        }
                    }
                }
            }
        }
        w.q -= &shift;
    }
    for i in 0..p.m() {
        // a singleton row has no kink to move onto
        if p.q.is_singleton(i) || cq.u_hat[i].is_nan() {
            continue;
        }
        if (wbar.y[i] - cq.y_hat[i]).abs() <= rho / (2.0 * sigma) && (wbar.u[i] - cq.u_hat[i]).abs() < rho / 2.0 {
            w.u[i] -= cq.vartheta[i];
        }
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Outer loop

/// Mutable state of one solve.
#[derive(Clone, Debug)]
pub struct SolveState {
    pub k: usize,
    pub w: Iterate,
    pub f: FEval,
    /// ‖F‖ of the last ζ iterates, current one included.
    pub history: VecDeque<f64>,
    pub counters: StepCounters,
    pub trace: Vec<TraceRecord>,
    pub initial_residual: f64,
    pub c_varsigma: f64,
    pub c_eta_outer: f64,
    pub inner_limits: InnerLimits,
    start: Instant,
}

impl SolveState {
    pub fn new(p: &ProblemSpec, w: Iterate, cfg: &SolverConfig) -> Result<Self> {
        let f = eval_f_with(&w, p, cfg.sigma, cfg.exec)?;
        let f0 = f.residual.norm;
        let mut history = VecDeque::with_capacity(cfg.zeta_window + 1);
        history.push_back(f0);
        Ok(SolveState {
            k: 0,
            w,
            f,
            history,
            counters: StepCounters::default(),
            trace: Vec::new(),
            initial_residual: f0,
            c_varsigma: cfg.c_varsigma.unwrap_or(1e-3 * f0),
            c_eta_outer: cfg.c_eta_outer.unwrap_or(1e-2 * f0),
            inner_limits: InnerLimits {
                max_iter: cfg.inner_max_iter.unwrap_or_else(|| default_inner_cap(p)),
                dense_max: cfg.dense_max,
            },
            start: Instant::now(),
        })
    }

    pub fn residual(&self) -> f64 {
        self.f.residual.norm
    }

    /// Inner tolerance min(C_η k^{−β}, c_η ‖F‖^q) at step index `k1` (1-based).
    pub fn inner_tolerance(&self, cfg: &SolverConfig, k1: usize) -> f64 {
        let kk = k1.max(1) as f64;
        (self.c_eta_outer * kk.powf(-cfg.beta)).min(cfg.c_eta * self.residual().powf(cfg.eta_q))
    }

    fn accept(&mut self, cfg: &SolverConfig, w: Iterate, f: FEval, rec: TraceRecord) {
        match rec.branch {
            Branch::Decrease1 => self.counters.decrease1 += 1,
            Branch::Decrease2 => self.counters.decrease2 += 1,
        }
        if rec.corrected {
            self.counters.corrections += 1;
        }
        self.w = w;
        self.f = f;
        self.k += 1;
        self.history.push_back(self.f.residual.norm);
        while self.history.len() > cfg.zeta_window {
            self.history.pop_front();
        }
        self.trace.push(rec);
    }

    /// One outer iteration. Requires ‖F(w^k)‖ > 0.
    pub fn step(&mut self, p: &ProblemSpec, cfg: &SolverConfig) -> Result<()> {
        let k1 = self.k + 1;
        let kk = k1 as f64;
        let fnorm = self.residual();
        if !(fnorm > 0.0) {
            return Err(SsnError::InvalidParameter("step called at an exact root".into()));
        }
        let sigma = cfg.sigma;
        let el = JacElement::from_parts(self.f.eig.clone(), &self.w, p, sigma, cfg.exec);
        let eta_bound = self.inner_tolerance(cfg, k1);
        let slack = self.c_varsigma * kk.powf(-5.0 / 3.0);
        let reference = self.history.iter().copied().fold(0.0, f64::max);
        let corr = cfg.correction;
        let gate = corr.enabled && fnorm < corr.activation;
        let mut inner_total = 0;

        for i in 0..=cfg.i_max {
            let tau = cfg.kappa * cfg.gamma.powi(i as i32) * fnorm;
            let dir = match solve_newton_system_cap(&el, p, TauVec::uniform(tau), &self.f.residual, eta_bound, self.inner_limits) {
                Ok(d) => d,
                Err(SsnError::InnerSolve { iterations, .. }) => {
                    inner_total += iterations;
                    continue;
                }
                Err(e) => return Err(e),
            };
            inner_total += dir.iterations;
            let mut wbar = self.w.clone();
            wbar.axpy(1.0, &dir.d);
            let trial = if gate {
                correction_apply_with(&wbar, p, sigma, corr.theta, corr.l, corr.rho, cfg.exec)?
            } else {
                wbar
            };
            let ft = match eval_f_with(&trial, p, sigma, cfg.exec) {
                Ok(f) => f,
                Err(SsnError::NonFinite(_)) => continue,
                Err(e) => return Err(e),
            };
            if ft.residual.norm <= cfg.nu * reference + slack {
                let rec = TraceRecord {
                    k: k1,
                    residual_before: fnorm,
                    residual: ft.residual.norm,
                    tau,
                    branch: Branch::Decrease1,
                    trial: i,
                    inner_iters: inner_total,
                    eta: dir.residual,
                    eta_bound,
                    corrected: gate,
                    time: self.start.elapsed().as_secs_f64(),
                };
                self.accept(cfg, trial, ft, rec);
                return Ok(());
            }
        }

        let tau = cfg.kappa1 * kk.powf(cfg.beta);
        let dir = solve_newton_system_cap(&el, p, TauVec::uniform(tau), &self.f.residual, eta_bound, self.inner_limits)?;
        inner_total += dir.iterations;
        let mut wbar = self.w.clone();
        wbar.axpy(1.0, &dir.d);
        let fb = eval_f_with(&wbar, p, sigma, cfg.exec)?;
        let rec = TraceRecord {
            k: k1,
            residual_before: fnorm,
            residual: fb.residual.norm,
            tau,
            branch: Branch::Decrease2,
            trial: cfg.i_max + 1,
            inner_iters: inner_total,
            eta: dir.residual,
            eta_bound,
            corrected: false,
            time: self.start.elapsed().as_secs_f64(),
        };
        self.accept(cfg, wbar, fb, rec);
        Ok(())
    }
}

fn solve_newton_system_cap(
    el: &JacElement,
    p: &ProblemSpec,
    tau: TauVec,
    rhs: &ResidualVec,
    inner_tol: f64,
    limits: InnerLimits,
) -> Result<NewtonDirection> {
    let path = if p.is_standard_sdp() { NewtonPath::Sdp } else { NewtonPath::General };
    solve_newton_system_with(el, p, tau, rhs, inner_tol, limits, path)
}

/// Scale factors of the optional pre-solve normalization.
#[derive(Clone, Copy, Debug)]
struct Scaling {
    b: f64,
    c: f64,
}

impl Scaling {
    fn of(p: &ProblemSpec) -> Self {
        let rhs = p.q.reference_rhs();
        let nb = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc = p.c.norm();
        Scaling {
            b: if nb > 0.0 { nb } else { 1.0 },
            c: if nc > 0.0 { nc } else { 1.0 },
        }
    }

    fn problem(&self, p: &ProblemSpec) -> Result<ProblemSpec> {
        let lo = p.q.lo().iter().map(|v| v / self.b).collect();
        let hi = p.q.hi().iter().map(|v| v / self.b).collect();
        let h = match p.h {
            HSpec::Box { lo, hi } => HSpec::Box {
                lo: lo / self.b,
                hi: hi / self.b,
            },
            h => h,
        };
        ProblemSpec::new(p.c.scaled(1.0 / self.c), p.a.clone(), BoxSet::new(lo, hi)?, h)
    }

    fn forward(&self, w: &Iterate) -> Iterate {
        Iterate {
            y: w.y.iter().map(|v| v / self.c).collect(),
            z: w.z.scaled(1.0 / self.c),
            x: w.x.scaled(1.0 / self.b),
            u: w.u.iter().map(|v| v / self.b).collect(),
            q: w.q.scaled(1.0 / self.b),
        }
    }

    fn back(&self, w: &Iterate) -> Iterate {
        Iterate {
            y: w.y.iter().map(|v| v * self.c).collect(),
            z: w.z.scaled(self.c),
            x: w.x.scaled(self.b),
            u: w.u.iter().map(|v| v * self.b).collect(),
            q: w.q.scaled(self.b),
        }
    }
}

/// Runs the Newton loop from `w0` (or the default start) until the KKT
/// metric (η₁ without h, η₂ with h) is at most `cfg.tol` or a budget runs out.
pub fn solve(p: &ProblemSpec, w0: Option<&Iterate>, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let scaling = cfg.rescale.then(|| Scaling::of(p));
    let ps = match &scaling {
        Some(s) => s.problem(p)?,
        None => p.clone(),
    };
    let w = match w0 {
        Some(w) => {
            w.check_conforms(p)?;
            if !w.is_finite() {
                return Err(SsnError::NonFinite("initial iterate"));
            }
            let mut w = scaling.map_or_else(|| w.clone(), |s| s.forward(w));
            if p.h.is_absent() {
                w.z = w.z.scaled(0.0);
            }
            w
        }
        None => Iterate::initial(&ps, None)?,
    };
    let original = |w: &Iterate| scaling.map_or_else(|| w.clone(), |s| s.back(w));

    let start = Instant::now();
    let mut state = SolveState::new(&ps, w, cfg)?;
    let mut iterates = Vec::new();
    if cfg.keep_iterates {
        iterates.push(original(&state.w));
    }
    let mut failure = None;
    let (status, kkt, s) = loop {
        let wo = original(&state.w);
        let (kkt, s) = compute_kkt_full(&wo, p)?;
        if state.residual() == 0.0 || kkt.stopping_metric() <= cfg.tol {
            break (SolveStatus::Optimal, kkt, s);
        }
        if state.k >= cfg.max_iter {
            break (SolveStatus::MaxIter, kkt, s);
        }
        if cfg.max_time.is_some_and(|t| start.elapsed().as_secs_f64() >= t) {
            break (SolveStatus::MaxTime, kkt, s);
        }
        if let Err(e) = state.step(&ps, cfg) {
            failure = Some(e.to_string());
            break (SolveStatus::NumericFailure, kkt, s);
        }
        if cfg.keep_iterates {
            iterates.push(original(&state.w));
        }
    };
    let iterate = original(&state.w);
    Ok(SolveReport {
        status,
        iterations: state.k,
        residual: state.residual(),
        initial_residual: state.initial_residual,
        time: start.elapsed().as_secs_f64(),
        kkt,
        x: iterate.x.clone(),
        y: iterate.y.clone(),
        z: iterate.z.clone(),
        s,
        iterate,
        counters: state.counters,
        trace: state.trace,
        iterates,
        scaling: scaling.map(|s| (s.b, s.c)),
        failure,
    })
}
