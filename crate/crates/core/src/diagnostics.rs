//! KKT residual metrics, strict complementarity checks and trace analysis.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{project_psd_with, sym_eig_with, SymBlockMat};
use crate::par::Exec;
use crate::saddle::{eval_f, prox_h, Iterate, ProblemSpec};

/// Relative KKT residuals of a primal-dual point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub eta_p: f64,
    pub eta_d: f64,
    pub eta_k: f64,
    pub eta_kstar: f64,
    pub eta_c1: f64,
    pub eta_p_h: f64,
    pub eta_c2: f64,
    /// |obj_p − obj_d| / |1 + obj_p + obj_d|
    pub eta_g: f64,
    /// |obj_p − obj_d| / (1 + |obj_p| + |obj_d|)
    pub eta_g_abs: f64,
    /// max(η_p, η_d, η_K, η_K*, η_C1)
    pub eta1: f64,
    /// max of η1 and η_P, η_C2
    pub eta2: f64,
    pub obj_p: f64,
    pub obj_d: f64,
    /// Largest dual multiplier entry whose sign makes a support term infinite
    /// (0 when the dual objective is finite).
    pub dual_infeasibility: f64,
    /// Whether h is present: selects η₂ over η₁ as the stopping metric.
    pub has_h: bool,
}

impl KktReport {
    pub fn stopping_metric(&self) -> f64 {
        if self.has_h {
            self.eta2
        } else {
            self.eta1
        }
    }
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// sup_{t ∈ [lo, hi]} a·t, split into its finite part and the magnitude of
/// `a` when the supremum is +∞.
fn support(a: f64, lo: f64, hi: f64) -> (f64, f64) {
    if a > 0.0 {
        if hi.is_finite() {
            (a * hi, 0.0)
        } else {
            (0.0, a)
        }
    } else if a < 0.0 {
        if lo.is_finite() {
            (a * lo, 0.0)
        } else {
            (0.0, -a)
        }
    } else {
        (0.0, 0.0)
    }
}

/// KKT metrics of `w` for problem `p`. The dual slack is recovered as
/// `s = Π_K(c − A*y − z − x)`. `sigma` is accepted for interface symmetry
/// and does not enter the metrics.
pub fn compute_kkt(w: &Iterate, p: &ProblemSpec, _sigma: f64) -> Result<KktReport> {
    Ok(compute_kkt_full(w, p)?.0)
}

/// [`compute_kkt`] together with the recovered s.
pub fn compute_kkt_full(w: &Iterate, p: &ProblemSpec) -> Result<(KktReport, SymBlockMat)> {
    w.check_conforms(p)?;
    let exec = Exec::default();
    let has_h = !p.h.is_absent();
    let dims = p.block_dims();
    let z = if has_h { w.z.clone() } else { SymBlockMat::zeros(&dims) };
    let x = &w.x;

    let aty = p.a.adjoint_unchecked(&w.y, exec);
    let mut dual_base = &p.c - &aty;
    dual_base -= &z;
    let (s, _) = project_psd_with(&(&dual_base - x), exec)?;

    let ax = p.a.apply_unchecked(x, exec);
    let pax = p.q.project(&ax);
    let bref = p.q.reference_rhs();
    let diff: Vec<f64> = ax.iter().zip(&pax).map(|(a, b)| a - b).collect();
    let eta_p = vnorm(&diff) / (1.0 + vnorm(&bref));

    let mut dres = aty.clone();
    dres += &z;
    dres += &s;
    dres -= &p.c;
    let eta_d = dres.norm() / (1.0 + p.c.norm());

    let xn = x.norm();
    let sn = s.norm();
    let (px, _) = project_psd_with(x, exec)?;
    let eta_k = (x - &px).norm() / (1.0 + xn);
    // s is a projection, so it lies in K up to rounding
    let (ps, _) = project_psd_with(&s, exec)?;
    let eta_kstar = (&s - &ps).norm() / (1.0 + sn);
    let eta_c1 = x.dot(&s).abs() / (1.0 + xn + sn);

    let (eta_p_h, eta_c2) = if has_h {
        let ph = prox_h(x, 1.0, &p.h);
        ((x - &ph).norm() / (1.0 + xn), x.dot(&z).abs() / (1.0 + xn + z.norm()))
    } else {
        (0.0, 0.0)
    };

    let obj_p = p.c.dot(x);
    // obj_d = −δ*_Q(−y) − h*(−z)
    let mut obj_d = 0.0;
    let mut infeas: f64 = 0.0;
    for i in 0..p.m() {
        let (v, bad) = support(-w.y[i], p.q.lo()[i], p.q.hi()[i]);
        obj_d -= v;
        infeas = infeas.max(bad);
    }
    if has_h {
        let (lo, hi) = p.h.bounds();
        for b in z.blocks() {
            for &zij in b.iter() {
                let (v, bad) = support(-zij, lo, hi);
                obj_d -= v;
                infeas = infeas.max(bad);
            }
        }
    }
    let gap = (obj_p - obj_d).abs();
    let eta_g = gap / (1.0 + obj_p + obj_d).abs();
    let eta_g_abs = gap / (1.0 + obj_p.abs() + obj_d.abs());

    let eta1 = eta_p.max(eta_d).max(eta_k).max(eta_kstar).max(eta_c1);
    let eta2 = eta1.max(eta_p_h).max(eta_c2);
    Ok((
        KktReport {
            eta_p,
            eta_d,
            eta_k,
            eta_kstar,
            eta_c1,
            eta_p_h,
            eta_c2,
            eta_g,
            eta_g_abs,
            eta1,
            eta2,
            obj_p,
            obj_d,
            dual_infeasibility: infeas,
            has_h,
        },
        s,
    ))
}

/// Outcome of a strict complementarity test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScCheck {
    pub holds: bool,
    pub rank_x: usize,
    pub rank_s: usize,
    pub order: usize,
    pub xs: f64,
    /// ⟨z, x⟩ when z is supplied.
    pub zx: Option<f64>,
    /// min_ij (x + z)_ij when z is supplied.
    pub min_x_plus_z: Option<f64>,
}

fn numeric_rank(m: &SymBlockMat, rank_tol: f64) -> Result<usize> {
    let vals = sym_eig_with(m, Exec::Sequential)?.all_values();
    let lmax = vals.iter().copied().fold(0.0, f64::max);
    if lmax <= 0.0 {
        return Ok(0);
    }
    Ok(vals.iter().filter(|&&l| l > rank_tol * lmax).count())
}

/// Strict complementarity of (x, s) and, with `z`, of the elementwise pair.
///
/// Without z: `rank(x) + rank(s) = n` and `⟨x, s⟩ = 0`. With z additionally
/// `⟨z, x⟩ = 0` and every entry of `x + z` above `rank_tol`. Inner products
/// count as zero below `rank_tol · (1 + ‖x‖·‖s‖)`.
pub fn check_sc(x: &SymBlockMat, s: &SymBlockMat, z: Option<&SymBlockMat>, rank_tol: f64) -> Result<ScCheck> {
    x.check_conforms(s)?;
    let rank_x = numeric_rank(x, rank_tol)?;
    let rank_s = numeric_rank(s, rank_tol)?;
    let order = x.order();
    let xs = x.dot(s);
    let mut holds = rank_x + rank_s == order && xs.abs() <= rank_tol * (1.0 + x.norm() * s.norm());
    let (mut zx, mut min_xz) = (None, None);
    if let Some(z) = z {
        z.check_conforms(x)?;
        let ip = z.dot(x);
        let m = (x + z).min_entry();
        holds = holds && ip.abs() <= rank_tol * (1.0 + x.norm() * z.norm()) && m > rank_tol;
        zx = Some(ip);
        min_xz = Some(m);
    }
    Ok(ScCheck {
        holds,
        rank_x,
        rank_s,
        order,
        xs,
        zx,
        min_x_plus_z: min_xz,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundPoint {
    pub residual: f64,
    pub distance: f64,
    /// ‖w − w*‖ / ‖F(w)‖, absent when the residual is zero.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundProbe {
    pub points: Vec<ErrorBoundPoint>,
    pub max_ratio: Option<f64>,
}

/// Pairs (‖F(w^k)‖, ‖w^k − w*‖) along a sequence of iterates.
pub fn error_bound_probe(iterates: &[Iterate], w_star: &Iterate, p: &ProblemSpec, sigma: f64) -> Result<ErrorBoundProbe> {
    let mut points = Vec::with_capacity(iterates.len());
    for w in iterates {
        let residual = eval_f(w, p, sigma)?.residual.norm;
        let distance = w.sub(w_star).norm();
        let ratio = (residual > 0.0).then(|| distance / residual);
        points.push(ErrorBoundPoint { residual, distance, ratio });
    }
    let max_ratio = points.iter().filter_map(|p| p.ratio).reduce(f64::max);
    Ok(ErrorBoundProbe { points, max_ratio })
}

/// Least-squares slope of log r_{k+1} against log r_k over the last four
/// entries. `None` if the trace is shorter than four, not strictly
/// decreasing there, or contains nonpositive values.
pub fn superlinear_ratio(residuals: &[f64]) -> Option<f64> {
    if residuals.len() < 4 {
        return None;
    }
    let tail = &residuals[residuals.len() - 4..];
    if tail.iter().any(|&r| !(r > 0.0) || !r.is_finite()) || tail.windows(2).any(|w| w[1] >= w[0]) {
        return None;
    }
    let pts: Vec<(f64, f64)> = tail.windows(2).map(|w| (w[0].ln(), w[1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ConstraintMap, Triplet};

    fn scalar_sdp() -> ProblemSpec {
        let a = ConstraintMap::new(vec![1], vec![vec![Triplet::new(0, 0, 0, 1.0)]]).unwrap();
        ProblemSpec::sdp(SymBlockMat::from_diag(&[2.0]), a, vec![1.0]).unwrap()
    }

    #[test]
    fn exact_solution_has_zero_metrics() {
        let p = scalar_sdp();
        let mut w = Iterate::zeros(&p);
        w.y = vec![2.0];
        w.x = SymBlockMat::from_diag(&[1.0]);
        w.u = vec![1.0];
        let k = compute_kkt(&w, &p, 1.0).unwrap();
        assert_eq!(k.eta1, 0.0);
        assert_eq!(k.eta2, 0.0);
        assert_eq!(k.eta_g, 0.0);
        assert_eq!(k.obj_p, 2.0);
        assert_eq!(k.obj_d, 2.0);
    }

    #[test]
    fn primal_violation() {
        let p = scalar_sdp();
        let mut w = Iterate::zeros(&p);
        w.y = vec![2.0];
        w.x = SymBlockMat::from_diag(&[1.25]);
        let k = compute_kkt(&w, &p, 1.0).unwrap();
        assert!((k.eta_p - 0.25 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cone_violation() {
        let a = ConstraintMap::new(vec![2], vec![vec![Triplet::new(0, 0, 0, 1.0)]]).unwrap();
        let p = ProblemSpec::sdp(SymBlockMat::zeros(&[2]), a, vec![1.0]).unwrap();
        let mut w = Iterate::zeros(&p);
        w.x = SymBlockMat::from_diag(&[1.0, -0.5]);
        let k = compute_kkt(&w, &p, 1.0).unwrap();
        let xn = (1.25f64).sqrt();
        assert!((k.eta_k - 0.5 / (1.0 + xn)).abs() < 1e-15);
    }

    #[test]
    fn sc_examples() {
        let x = SymBlockMat::from_diag(&[1.0, 0.0]);
        let s = SymBlockMat::from_diag(&[0.0, 1.0]);
        assert!(check_sc(&x, &s, None, 1e-8).unwrap().holds);
        let r = check_sc(&x, &SymBlockMat::zeros(&[2]), None, 1e-8).unwrap();
        assert!(!r.holds);
        assert_eq!(r.rank_x + r.rank_s, 1);
    }

    #[test]
    fn superlinear_examples() {
        let geo: Vec<f64> = (0..8).map(|k| 0.5f64.powi(k)).collect();
        assert!((superlinear_ratio(&geo).unwrap() - 1.0).abs() < 1e-12);
        let quad: Vec<f64> = (0..5).map(|k| 0.5f64.powi(1 << k)).collect();
        assert!((superlinear_ratio(&quad).unwrap() - 2.0).abs() < 1e-12);
        assert!(superlinear_ratio(&[1.0, 0.5]).is_none());
        assert!(superlinear_ratio(&[1.0, 0.5, 0.6, 0.1]).is_none());
    }

    #[test]
    fn error_bound_at_solution() {
        let p = scalar_sdp();
        let mut w = Iterate::zeros(&p);
        w.y = vec![2.0];
        w.x = SymBlockMat::from_diag(&[1.0]);
        w.u = vec![1.0];
        let probe = error_bound_probe(std::slice::from_ref(&w), &w, &p, 1.0).unwrap();
        assert_eq!(probe.points[0].residual, 0.0);
        assert_eq!(probe.points[0].distance, 0.0);
        assert!(probe.max_ratio.is_none());
    }
}
