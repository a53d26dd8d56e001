//! Problem statement, proximal primitives, the augmented Lagrangian Φ and
//! the saddle residual map F.
//!
//! With `M = x + σ(A*y + z − c)`:
//!
//! ```text
//! F_y = A Π_K(M) − Π_Q(u − σy)
//! F_z = Π_K(M) − prox_σh(q − σz)
//! F_x = (x − Π_K(M)) / σ
//! F_u = (u − Π_Q(u − σy)) / σ
//! F_q = (q − prox_σh(q − σz)) / σ
//! ```
//!
//! When `h` is absent the pair (z, q) is not part of the problem: z is held at
//! zero, F_z and F_q are identically zero, and Newton directions never move
//! them.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};
use crate::linalg::{project_psd_with, ConstraintMap, EigDecomp, SymBlockMat};
use crate::par::Exec;

/// Coordinatewise box `Q = Π_i [lo_i, hi_i]` on Rᵐ. Bounds may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(SsnError::dim("box bounds have different lengths"));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(SsnError::InvalidParameter(format!("box coordinate {i}: [{l}, {h}]")));
            }
            if *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                return Err(SsnError::InvalidParameter(format!("box coordinate {i} is empty")));
            }
        }
        Ok(BoxSet { lo, hi })
    }

    /// `{b}`: encodes the equality A(x) = b.
    pub fn singleton(b: Vec<f64>) -> Self {
        BoxSet { lo: b.clone(), hi: b }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_singleton(&self, i: usize) -> bool {
        self.lo[i] == self.hi[i]
    }

    pub fn all_singleton(&self) -> bool {
        (0..self.len()).all(|i| self.is_singleton(i))
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        prox_box(v, &self.lo, &self.hi)
    }

    /// Right-hand side used in relative error denominators: `b` for equality
    /// rows, the largest finite bound magnitude otherwise.
    pub fn reference_rhs(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let fl = if l.is_finite() { l.abs() } else { 0.0 };
                let fh = if h.is_finite() { h.abs() } else { 0.0 };
                if l == h {
                    l
                } else {
                    fl.max(fh)
                }
            })
            .collect()
    }
}

/// Elementwise indicator `h` on the matrix variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HSpec {
    Absent,
    Nonneg,
    Box { lo: f64, hi: f64 },
}

impl HSpec {
    pub fn is_absent(&self) -> bool {
        matches!(self, HSpec::Absent)
    }

    pub fn validate(&self) -> Result<()> {
        if let HSpec::Box { lo, hi } = *self {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(SsnError::InvalidParameter(format!("h box [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Scalar bounds of the feasible interval for one entry.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            HSpec::Absent => (f64::NEG_INFINITY, f64::INFINITY),
            HSpec::Nonneg => (0.0, f64::INFINITY),
            HSpec::Box { lo, hi } => (lo, hi),
        }
    }
}

/// `min ⟨c,x⟩ + h(x)  s.t.  A(x) ∈ Q, x ⪰ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub c: SymBlockMat,
    pub a: ConstraintMap,
    pub q: BoxSet,
    pub h: HSpec,
}

impl ProblemSpec {
    pub fn new(c: SymBlockMat, a: ConstraintMap, q: BoxSet, h: HSpec) -> Result<Self> {
        if c.block_dims() != a.block_dims() {
            return Err(SsnError::dim(format!(
                "objective blocks {:?} vs constraint blocks {:?}",
                c.block_dims(),
                a.block_dims()
            )));
        }
        if q.len() != a.m() {
            return Err(SsnError::dim(format!("box has {} rows, map has {}", q.len(), a.m())));
        }
        h.validate()?;
        Ok(ProblemSpec { c, a, q, h })
    }

    /// Standard equality-form SDP: `A(x) = b`, `x ⪰ 0`.
    pub fn sdp(c: SymBlockMat, a: ConstraintMap, b: Vec<f64>) -> Result<Self> {
        Self::new(c, a, BoxSet::singleton(b), HSpec::Absent)
    }

    pub fn m(&self) -> usize {
        self.a.m()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.c.block_dims()
    }

    pub fn order(&self) -> usize {
        self.c.order()
    }

    /// Singleton Q and no h: the (y, x) reduced formulation applies.
    pub fn is_standard_sdp(&self) -> bool {
        self.h.is_absent() && self.q.all_singleton()
    }

    /// `b` when every row of Q is a singleton.
    pub fn rhs(&self) -> Option<&[f64]> {
        self.q.all_singleton().then(|| self.q.lo())
    }
}

/// Componentwise clamp of `v` into `[lo, hi]`.
pub fn prox_box(v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&x, (&l, &h))| x.max(l).min(h))
        .collect()
}

/// prox_{σh}(V). For indicator functions this is the projection and does
/// not depend on σ.
pub fn prox_h(v: &SymBlockMat, _sigma: f64, h: &HSpec) -> SymBlockMat {
    match *h {
        HSpec::Absent => v.clone(),
        HSpec::Nonneg => v.map(|a| a.max(0.0)),
        HSpec::Box { lo, hi } => v.map(|a| a.max(lo).min(hi)),
    }
}

/// A point `w = (y, z, x, u, q)` of the saddle problem, also used for
/// Newton directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub y: Vec<f64>,
    pub z: SymBlockMat,
    pub x: SymBlockMat,
    pub u: Vec<f64>,
    pub q: SymBlockMat,
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Iterate {
    pub fn zeros(p: &ProblemSpec) -> Self {
        let dims = p.block_dims();
        Iterate {
            y: vec![0.0; p.m()],
            z: SymBlockMat::zeros(&dims),
            x: SymBlockMat::zeros(&dims),
            u: vec![0.0; p.m()],
            q: SymBlockMat::zeros(&dims),
        }
    }

    /// y = 0, z = 0, x = Π_K(guess) (or 0), u = Π_Q(0), q = x.
    pub fn initial(p: &ProblemSpec, x_guess: Option<&SymBlockMat>) -> Result<Self> {
        let mut w = Iterate::zeros(p);
        if let Some(g) = x_guess {
            g.check_conforms(&p.c)?;
            w.x = project_psd_with(g, Exec::default())?.0;
        }
        w.u = p.q.project(&vec![0.0; p.m()]);
        if !p.h.is_absent() {
            w.q = w.x.clone();
        }
        Ok(w)
    }

    pub fn check_conforms(&self, p: &ProblemSpec) -> Result<()> {
        let dims = p.block_dims();
        if self.y.len() != p.m() || self.u.len() != p.m() {
            return Err(SsnError::dim("iterate vector length differs from constraint count"));
        }
        for (name, mat) in [("z", &self.z), ("x", &self.x), ("q", &self.q)] {
            if mat.block_dims() != dims {
                return Err(SsnError::dim(format!("iterate component {name} has wrong block structure")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.y.iter().chain(&self.u).all(|v| v.is_finite())
            && self.z.is_finite()
            && self.x.is_finite()
            && self.q.is_finite()
    }

    pub fn dot(&self, o: &Iterate) -> f64 {
        vdot(&self.y, &o.y) + self.z.dot(&o.z) + self.x.dot(&o.x) + vdot(&self.u, &o.u) + self.q.dot(&o.q)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// self += a * o
    pub fn axpy(&mut self, a: f64, o: &Iterate) {
        self.y.iter_mut().zip(&o.y).for_each(|(s, v)| *s += a * v);
        self.u.iter_mut().zip(&o.u).for_each(|(s, v)| *s += a * v);
        self.z.axpy(a, &o.z);
        self.x.axpy(a, &o.x);
        self.q.axpy(a, &o.q);
    }

    pub fn scaled(&self, a: f64) -> Iterate {
        Iterate {
            y: self.y.iter().map(|v| a * v).collect(),
            z: self.z.scaled(a),
            x: self.x.scaled(a),
            u: self.u.iter().map(|v| a * v).collect(),
            q: self.q.scaled(a),
        }
    }

    pub fn sub(&self, o: &Iterate) -> Iterate {
        let mut out = self.clone();
        out.axpy(-1.0, o);
        out
    }

    pub fn zeros_like(&self) -> Iterate {
        self.scaled(0.0)
    }
}

/// F(w), component by component, with its norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualVec {
    pub fy: Vec<f64>,
    pub fz: SymBlockMat,
    pub fx: SymBlockMat,
    pub fu: Vec<f64>,
    pub fq: SymBlockMat,
    pub norm: f64,
}

impl ResidualVec {
    pub fn from_parts(fy: Vec<f64>, fz: SymBlockMat, fx: SymBlockMat, fu: Vec<f64>, fq: SymBlockMat) -> Self {
        let norm = (vdot(&fy, &fy) + fz.norm_sq() + fx.norm_sq() + vdot(&fu, &fu) + fq.norm_sq()).sqrt();
        ResidualVec { fy, fz, fx, fu, fq, norm }
    }

    /// The residual as a vector in w-space.
    pub fn as_iterate(&self) -> Iterate {
        Iterate {
            y: self.fy.clone(),
            z: self.fz.clone(),
            x: self.fx.clone(),
            u: self.fu.clone(),
            q: self.fq.clone(),
        }
    }
}

/// F(w) together with the spectral data of its PSD argument.
#[derive(Clone, Debug)]
pub struct FEval {
    pub residual: ResidualVec,
    /// Eigendecomposition of `x + σ(A*y + z − c)`.
    pub eig: EigDecomp,
    /// Π_K of the same argument.
    pub proj_k: SymBlockMat,
}

/// `x + σ(A*y + z − c)`; z is ignored when h is absent.
pub fn spectral_argument(w: &Iterate, p: &ProblemSpec, sigma: f64, exec: Exec) -> SymBlockMat {
    let mut m = p.a.adjoint_unchecked(&w.y, exec);
    if !p.h.is_absent() {
        m += &w.z;
    }
    m -= &p.c;
    m.scale_mut(sigma);
    m += &w.x;
    m
}

/// Evaluates F(w).
pub fn eval_f(w: &Iterate, p: &ProblemSpec, sigma: f64) -> Result<FEval> {
    eval_f_with(w, p, sigma, Exec::default())
}

pub fn eval_f_with(w: &Iterate, p: &ProblemSpec, sigma: f64, exec: Exec) -> Result<FEval> {
    if !(sigma > 0.0) {
        return Err(SsnError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    w.check_conforms(p)?;
    if !w.is_finite() {
        return Err(SsnError::NonFinite("iterate"));
    }
    let m = spectral_argument(w, p, sigma, exec);
    let (pk, eig) = project_psd_with(&m, exec)?;

    let r: Vec<f64> = w.u.iter().zip(&w.y).map(|(u, y)| u - sigma * y).collect();
    let pq = p.q.project(&r);
    let apk = p.a.apply_unchecked(&pk, exec);
    let fy: Vec<f64> = apk.iter().zip(&pq).map(|(a, b)| a - b).collect();
    let fu: Vec<f64> = w.u.iter().zip(&pq).map(|(u, b)| (u - b) / sigma).collect();
    let fx = (&w.x - &pk).scaled(1.0 / sigma);

    let (fz, fq) = if p.h.is_absent() {
        (SymBlockMat::zeros(&p.block_dims()), SymBlockMat::zeros(&p.block_dims()))
    } else {
        let g = &w.q - &w.z.scaled(sigma);
        let ph = prox_h(&g, sigma, &p.h);
        (&pk - &ph, (&w.q - &ph).scaled(1.0 / sigma))
    };
    let residual = ResidualVec::from_parts(fy, fz, fx, fu, fq);
    if !residual.norm.is_finite() {
        return Err(SsnError::NonFinite("residual"));
    }
    Ok(FEval {
        residual,
        eig,
        proj_k: pk,
    })
}

/// Reduced residual of the standard SDP in the variables (y, x):
/// with φ = Π_K(A*y − c + x/σ), returns `(σA(φ) − b, x/σ − φ, φ)`.
pub fn eval_f_sdp(y: &[f64], x: &SymBlockMat, p: &ProblemSpec, sigma: f64) -> Result<(Vec<f64>, SymBlockMat, SymBlockMat)> {
    let b = p
        .rhs()
        .ok_or_else(|| SsnError::InvalidParameter("reduced SDP residual needs equality constraints".into()))?;
    if !p.h.is_absent() {
        return Err(SsnError::InvalidParameter("reduced SDP residual needs h absent".into()));
    }
    let mut arg = p.a.adjoint(y)?;
    arg -= &p.c;
    arg.axpy(1.0 / sigma, x);
    let (phi, _) = project_psd_with(&arg, Exec::default())?;
    let aphi = p.a.apply(&phi)?;
    let fy = aphi.iter().zip(b).map(|(a, bi)| sigma * a - bi).collect();
    let fx = &x.scaled(1.0 / sigma) - &phi;
    Ok((fy, fx, phi))
}

/// Φ(w). Each envelope term is evaluated exactly as
/// `support(normal part) + ‖projection‖²/(2σ)`; for the cone K the support
/// term vanishes.
pub fn eval_phi(w: &Iterate, p: &ProblemSpec, sigma: f64) -> Result<f64> {
    w.check_conforms(p)?;
    let m = spectral_argument(w, p, sigma, Exec::default());
    let (pk, _) = project_psd_with(&m, Exec::default())?;
    let env_k = pk.norm_sq() / (2.0 * sigma);

    let r: Vec<f64> = w.u.iter().zip(&w.y).map(|(u, y)| u - sigma * y).collect();
    let pq = p.q.project(&r);
    // ⟨(r − Π r)/σ, Π r⟩ + ‖Π r‖²/(2σ); coordinates where r lies outside an
    // infinite bound cannot occur because Π r is then finite and r − Π r = 0
    // along that bound's direction.
    let env_q: f64 = r
        .iter()
        .zip(&pq)
        .map(|(ri, pi)| (ri - pi) * pi / sigma + pi * pi / (2.0 * sigma))
        .sum();

    let (env_h, qn) = if p.h.is_absent() {
        (0.0, 0.0)
    } else {
        let g = &w.q - &w.z.scaled(sigma);
        let ph = prox_h(&g, sigma, &p.h);
        let normal = &g - &ph;
        (normal.dot(&ph) / sigma + ph.norm_sq() / (2.0 * sigma), w.q.norm_sq())
    };
    let un: f64 = vdot(&w.u, &w.u);
    Ok(env_h + env_k + env_q - (w.x.norm_sq() + un + qn) / (2.0 * sigma))
}
