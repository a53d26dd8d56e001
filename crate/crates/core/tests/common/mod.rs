//! Reference implementations shared by the integration tests. Nothing here
//! calls into the solver's Jacobian, Newton or KKT code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ssncp::{BoxSet, ConstraintMap, HSpec, Iterate, ProblemSpec, SymBlockMat, Triplet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_sym(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> SymBlockMat {
    let blocks = dims
        .iter()
        .map(|&d| {
            let g = DMatrix::from_fn(d, d, |_, _| normal(rng) * scale);
            (&g + g.transpose()) * 0.5
        })
        .collect();
    SymBlockMat::from_blocks(blocks).unwrap()
}

pub fn random_constraints(rng: &mut ChaCha8Rng, dims: &[usize], m: usize) -> ConstraintMap {
    let coeffs = (0..m)
        .map(|_| {
            let mut row = Vec::new();
            for (b, &d) in dims.iter().enumerate() {
                for i in 0..d {
                    for j in 0..=i {
                        if rng.random_bool(0.6) {
                            row.push(Triplet::new(b, i, j, normal(rng)));
                        }
                    }
                }
            }
            if row.is_empty() {
                row.push(Triplet::new(0, 0, 0, 1.0));
            }
            row
        })
        .collect();
    ConstraintMap::new(dims.to_vec(), coeffs).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HKind {
    Absent,
    Nonneg,
    Box,
}

/// Random problem with a mix of equality and two-sided rows.
pub fn random_problem(rng: &mut ChaCha8Rng, dims: &[usize], m: usize, h: HKind) -> ProblemSpec {
    let a = random_constraints(rng, dims, m);
    let c = random_sym(rng, dims, 1.0);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    for _ in 0..m {
        let v = normal(rng);
        match rng.random_range(0..3) {
            0 => {
                lo.push(v);
                hi.push(v);
            }
            1 => {
                lo.push(v - 1.0);
                hi.push(v + 1.0);
            }
            _ => {
                lo.push(f64::NEG_INFINITY);
                hi.push(v);
            }
        }
    }
    let h = match h {
        HKind::Absent => HSpec::Absent,
        HKind::Nonneg => HSpec::Nonneg,
        HKind::Box => HSpec::Box { lo: -0.5, hi: 1.5 },
    };
    ProblemSpec::new(c, a, BoxSet::new(lo, hi).unwrap(), h).unwrap()
}

pub fn random_iterate(rng: &mut ChaCha8Rng, p: &ProblemSpec, scale: f64) -> Iterate {
    let dims = p.block_dims();
    let mut w = Iterate::zeros(p);
    w.y = (0..p.m()).map(|_| normal(rng) * scale).collect();
    w.u = (0..p.m()).map(|_| normal(rng) * scale).collect();
    w.x = random_sym(rng, &dims, scale);
    if !p.h.is_absent() {
        w.z = random_sym(rng, &dims, scale);
        w.q = random_sym(rng, &dims, scale);
    }
    w
}

// ---------------------------------------------------------------------------
// Flat coordinates: [y, z, x, u, q] with z, q dropped when h is absent.

pub struct Layout {
    pub m: usize,
    pub dims: Vec<usize>,
    pub nsym: usize,
    pub has_h: bool,
}

impl Layout {
    pub fn of(p: &ProblemSpec) -> Self {
        let dims = p.block_dims();
        let nsym = dims.iter().map(|d| d * (d + 1) / 2).sum();
        Layout {
            m: p.m(),
            dims,
            nsym,
            has_h: !p.h.is_absent(),
        }
    }

    pub fn len(&self) -> usize {
        2 * self.m + self.nsym * if self.has_h { 3 } else { 1 }
    }

    pub fn flatten(&self, w: &Iterate) -> DVector<f64> {
        let mut v = w.y.clone();
        if self.has_h {
            v.extend(w.z.svec());
        }
        v.extend(w.x.svec());
        v.extend(&w.u);
        if self.has_h {
            v.extend(w.q.svec());
        }
        DVector::from_vec(v)
    }

    pub fn unflatten(&self, v: &[f64]) -> Iterate {
        let (m, n) = (self.m, self.nsym);
        let sym = |s: &[f64]| SymBlockMat::from_svec(&self.dims, s).unwrap();
        let zero = SymBlockMat::zeros(&self.dims);
        let mut pos = 0;
        let mut take = |len: usize| {
            let s = &v[pos..pos + len];
            pos += len;
            s.to_vec()
        };
        let y = take(m);
        let z = if self.has_h { sym(&take(n)) } else { zero.clone() };
        let x = sym(&take(n));
        let u = take(m);
        let q = if self.has_h { sym(&take(n)) } else { zero };
        Iterate { y, z, x, u, q }
    }
}

// ---------------------------------------------------------------------------
// Dense generalized Jacobian assembled from first principles.

fn divided_difference(li: f64, lj: f64) -> f64 {
    let (pi, pj) = (li.max(0.0), lj.max(0.0));
    if li > 0.0 && lj > 0.0 {
        1.0
    } else if li <= 0.0 && lj <= 0.0 {
        0.0
    } else {
        (pi - pj) / (li - lj)
    }
}

struct DkBlock {
    v: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl DkBlock {
    fn new(m: &DMatrix<f64>) -> Self {
        let e = SymmetricEigen::new(m.clone());
        let n = m.nrows();
        let omega = DMatrix::from_fn(n, n, |i, j| divided_difference(e.eigenvalues[i], e.eigenvalues[j]));
        DkBlock { v: e.eigenvectors, omega }
    }

    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let t = self.v.transpose() * h * &self.v;
        &self.v * t.component_mul(&self.omega) * self.v.transpose()
    }
}

fn dense_adjoint(a: &[SymBlockMat], y: &[f64], dims: &[usize]) -> SymBlockMat {
    let mut out = SymBlockMat::zeros(dims);
    for (ak, yk) in a.iter().zip(y) {
        out.axpy(*yk, ak);
    }
    out
}

/// The element of ∂F(w) whose x-part is the Daleckii–Krein derivative with
/// the zero branch at kinks, as a dense matrix over [`Layout`] coordinates.
pub fn dense_jacobian(w: &Iterate, p: &ProblemSpec, sigma: f64) -> DMatrix<f64> {
    let lay = Layout::of(p);
    let dims = lay.dims.clone();
    let amats: Vec<SymBlockMat> = (0..p.m()).map(|k| p.a.constraint_matrix(k)).collect();
    let mut m = dense_adjoint(&amats, &w.y, &dims);
    if lay.has_h {
        m += &w.z;
    }
    m -= &p.c;
    m.scale_mut(sigma);
    m += &w.x;
    let dk: Vec<DkBlock> = m.blocks().iter().map(DkBlock::new).collect();
    let (lo, hi) = (p.q.lo(), p.q.hi());
    let qmask: Vec<f64> = (0..p.m())
        .map(|i| {
            let r = w.u[i] - sigma * w.y[i];
            if lo[i] < r && r < hi[i] {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let hmask = match p.h {
        HSpec::Absent => SymBlockMat::zeros(&dims),
        HSpec::Nonneg => (&w.q - &w.z.scaled(sigma)).map(|g| if g > 0.0 { 1.0 } else { 0.0 }),
        HSpec::Box { lo, hi } => (&w.q - &w.z.scaled(sigma)).map(|g| if lo < g && g < hi { 1.0 } else { 0.0 }),
    };

    let len = lay.len();
    let mut jac = DMatrix::zeros(len, len);
    for col in 0..len {
        let mut e = vec![0.0; len];
        e[col] = 1.0;
        let d = lay.unflatten(&e);
        let mut arg = dense_adjoint(&amats, &d.y, &dims);
        if lay.has_h {
            arg += &d.z;
        }
        arg.scale_mut(sigma);
        arg += &d.x;
        let dkv = SymBlockMat::from_blocks(dk.iter().zip(arg.blocks()).map(|(b, h)| b.apply(h)).collect()).unwrap();
        let dq: Vec<f64> = (0..p.m()).map(|i| qmask[i] * (d.u[i] - sigma * d.y[i])).collect();
        let jy: Vec<f64> = (0..p.m()).map(|i| amats[i].dot(&dkv) - dq[i]).collect();
        let ju: Vec<f64> = (0..p.m()).map(|i| (d.u[i] - dq[i]) / sigma).collect();
        let jx = (&d.x - &dkv).scaled(1.0 / sigma);
        let (jz, jq) = if lay.has_h {
            let dh = hmask.hadamard(&(&d.q - &d.z.scaled(sigma)));
            (&dkv - &dh, (&d.q - &dh).scaled(1.0 / sigma))
        } else {
            (SymBlockMat::zeros(&dims), SymBlockMat::zeros(&dims))
        };
        let out = lay.flatten(&Iterate { y: jy, z: jz, x: jx, u: ju, q: jq });
        jac.set_column(col, &out);
    }
    jac
}

// ---------------------------------------------------------------------------
// Consensus ADMM for small dense problems
//   min ⟨C, X⟩  s.t.  ⟨A_k, X⟩ = b_k,  X ⪰ 0,  (X ≥ 0)

pub struct AdmmResult {
    pub objective: f64,
    pub x: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_vec(SymBlockMat::from_blocks(vec![m.clone()]).unwrap().svec())
}

fn smat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    SymBlockMat::from_svec(&[n], v.as_slice()).unwrap().into_blocks().remove(0)
}

fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = e.eigenvalues.map(|l| l.max(0.0));
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

pub fn admm_oracle(c: &DMatrix<f64>, a: &[DMatrix<f64>], b: &[f64], nonneg: bool, tol: f64, max_iter: usize) -> AdmmResult {
    let n = c.nrows();
    let nv = n * (n + 1) / 2;
    let amat = DMatrix::from_fn(a.len(), nv, |k, j| svec(&a[k])[j]);
    let gram_pinv = (&amat * amat.transpose()).pseudo_inverse(1e-12).unwrap();
    let bv = DVector::from_column_slice(b);
    let proj_aff = |v: &DVector<f64>| v - amat.transpose() * (&gram_pinv * (&amat * v - &bv));
    let cv = svec(c);
    let rho = 1.0;
    let k = if nonneg { 3 } else { 2 };
    let mut z = DVector::zeros(nv);
    let mut us = vec![DVector::zeros(nv); k];
    let mut xs = vec![DVector::zeros(nv); k];
    let mut iterations = max_iter;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        xs[0] = proj_aff(&(&z - &us[0] - &cv / rho));
        xs[1] = svec(&psd_part(&smat(&(&z - &us[1]), n)));
        if nonneg {
            xs[2] = (&z - &us[2]).map(|v| v.max(0.0));
        }
        let z_old = z.clone();
        z = xs.iter().zip(&us).map(|(x, u)| x + u).fold(DVector::zeros(nv), |s, t| s + t) / k as f64;
        for (x, u) in xs.iter().zip(us.iter_mut()) {
            *u += x - &z;
        }
        if it % 50 == 0 {
            let primal = xs.iter().map(|x| (x - &z).norm()).fold(0.0, f64::max);
            let dual = rho * (&z - &z_old).norm() * (k as f64).sqrt();
            residual = primal.max(dual);
            if residual < tol {
                iterations = it;
                break;
            }
        }
    }
    // report the objective at the PSD iterate pushed onto the other sets
    let x = smat(&z, n);
    AdmmResult {
        objective: c.component_mul(&x).sum(),
        x,
        iterations,
        residual,
    }
}

/// min ½ xᵀQ₀x + c₀ᵀx over x ∈ {0,1}ⁿ by enumeration.
pub fn biq_enumerate(q0: &DMatrix<f64>, c0: &[f64]) -> f64 {
    let n = q0.nrows();
    assert!(n <= 20);
    (0u32..1 << n)
        .map(|mask| {
            let x = DVector::from_fn(n, |i, _| ((mask >> i) & 1) as f64);
            0.5 * x.dot(&(q0 * &x)) + c0.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// All set partitions of 0..n into exactly k nonempty parts, by restricted
/// growth strings.
pub fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, k: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for g in 0..=used.min(k - 1) {
            cur.push(g);
            rec(i + 1, n, k, used.max(g + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Dense copies of the constraint matrices of a single-block problem.
pub fn dense_constraints(p: &ProblemSpec) -> Vec<DMatrix<f64>> {
    (0..p.m()).map(|k| p.a.constraint_matrix(k).into_blocks().remove(0)).collect()
}

/// Daleckii–Krein derivative of Π_K at `m` applied to `h`, blockwise.
pub fn dk_oracle(m: &SymBlockMat, h: &SymBlockMat) -> SymBlockMat {
    let blocks = m.blocks().iter().zip(h.blocks()).map(|(mb, hb)| DkBlock::new(mb).apply(hb)).collect();
    SymBlockMat::from_blocks(blocks).unwrap()
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| normal(rng)).qr().q()
}

/// Symmetric block matrix with the given eigenvalues (one list per block)
/// and random eigenvectors.
pub fn with_spectrum(rng: &mut ChaCha8Rng, spectra: &[Vec<f64>]) -> SymBlockMat {
    let blocks = spectra
        .iter()
        .map(|lam| {
            let v = random_orthogonal(rng, lam.len());
            let m = &v * DMatrix::from_diagonal(&DVector::from_column_slice(lam)) * v.transpose();
            (&m + m.transpose()) * 0.5
        })
        .collect();
    SymBlockMat::from_blocks(blocks).unwrap()
}

/// A problem built around a known primal-dual pair, so it is feasible and
/// bounded. Row 0 fixes the trace; the other rows alternate between
/// equalities and inactive two-sided bounds.
pub fn feasible_problem(rng: &mut ChaCha8Rng, dims: &[usize], m: usize, h: HKind) -> ProblemSpec {
    assert!(m >= 1);
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for &d in dims {
        let (x, s) = match h {
            // diagonal pairs keep x entrywise in range
            HKind::Nonneg | HKind::Box => {
                let mut xd = vec![0.0; d];
                let mut sd = vec![0.0; d];
                for i in 0..d {
                    if rng.random_bool(0.5) {
                        xd[i] = rng.random_range(0.2..1.0);
                    } else {
                        sd[i] = rng.random_range(0.2..1.0);
                    }
                }
                (DMatrix::from_diagonal(&DVector::from_vec(xd)), DMatrix::from_diagonal(&DVector::from_vec(sd)))
            }
            HKind::Absent => {
                let v = random_orthogonal(rng, d);
                let r = rng.random_range(0..=d);
                let xd = DVector::from_fn(d, |i, _| if i < r { rng.random_range(0.2..1.0) } else { 0.0 });
                let sd = DVector::from_fn(d, |i, _| if i >= r { rng.random_range(0.2..1.0) } else { 0.0 });
                let x = &v * DMatrix::from_diagonal(&xd) * v.transpose();
                let s = &v * DMatrix::from_diagonal(&sd) * v.transpose();
                ((&x + x.transpose()) * 0.5, (&s + s.transpose()) * 0.5)
            }
        };
        xs.push(x);
        ss.push(s);
    }
    let x = SymBlockMat::from_blocks(xs).unwrap();
    let s = SymBlockMat::from_blocks(ss).unwrap();
    let rand_a = random_constraints(rng, dims, m - 1);
    let mut coeffs = vec![dims
        .iter()
        .enumerate()
        .flat_map(|(b, &d)| (0..d).map(move |i| Triplet::new(b, i, i, 1.0)))
        .collect::<Vec<_>>()];
    coeffs.extend(rand_a.coeffs().iter().cloned());
    let a = ConstraintMap::new(dims.to_vec(), coeffs).unwrap();
    let ax = a.apply(&x).unwrap();
    let mut y = vec![0.0; m];
    let (mut lo, mut hi) = (ax.clone(), ax.clone());
    for i in 0..m {
        if i == 0 || i % 2 == 1 {
            y[i] = normal(rng);
        } else {
            lo[i] -= 1.0;
            hi[i] += 1.0;
        }
    }
    let mut c = a.adjoint(&y).unwrap();
    c += &s;
    if h == HKind::Nonneg {
        // z ≥ 0 supported where x vanishes: every off-diagonal entry
        let z = random_sym(rng, dims, 1.0).map(f64::abs);
        let z = SymBlockMat::from_blocks(
            z.blocks()
                .iter()
                .map(|b| DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| if i == j { 0.0 } else { b[(i, j)] }))
                .collect(),
        )
        .unwrap();
        c += &z;
    }
    let h = match h {
        HKind::Absent => HSpec::Absent,
        HKind::Nonneg => HSpec::Nonneg,
        HKind::Box => HSpec::Box { lo: -0.5, hi: 1.5 },
    };
    ProblemSpec::new(c, a, BoxSet::new(lo, hi).unwrap(), h).unwrap()
}

/// ‖A‖ ≤ (Σ_k ‖A_k‖_F²)^{1/2}.
pub fn constraint_frobenius(p: &ProblemSpec) -> f64 {
    (0..p.m()).map(|k| p.a.constraint_matrix(k).norm_sq()).sum::<f64>().sqrt()
}
