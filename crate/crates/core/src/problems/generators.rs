use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};
use crate::linalg::{ConstraintMap, SymBlockMat, Triplet};
use crate::saddle::{BoxSet, HSpec, Iterate, ProblemSpec};

pub const DEFAULT_DENSITY: f64 = 0.1;

/// A primal-dual solution known by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownSolution {
    pub x: SymBlockMat,
    pub y: Vec<f64>,
    pub z: Option<SymBlockMat>,
    pub s: SymBlockMat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub m: usize,
    /// Whether strict complementarity holds by construction, when known.
    pub strictly_complementary: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub spec: ProblemSpec,
    pub known_solution: Option<KnownSolution>,
    pub meta: InstanceMeta,
}

impl GeneratedInstance {
    /// w* = (y*, z*, x*, u* = b, q* = x*) for the saddle map.
    pub fn known_iterate(&self) -> Option<Iterate> {
        let ks = self.known_solution.as_ref()?;
        let p = &self.spec;
        let mut w = Iterate::zeros(p);
        w.y = ks.y.clone();
        w.x = ks.x.clone();
        w.u = p.a.apply(&ks.x).ok()?;
        if !p.h.is_absent() {
            w.q = ks.x.clone();
            if let Some(z) = &ks.z {
                w.z = z.clone();
            }
        }
        Some(w)
    }
}

fn random_sparse_constraint(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    let mut row = Vec::new();
    for i in 0..n {
        for j in 0..=i {
            if rng.random_bool(density) {
                row.push(Triplet::new(0, i, j, rng.sample(StandardNormal)));
            }
        }
    }
    row
}

fn nonsc_core(
    n: usize,
    m: usize,
    rank_x: usize,
    rank_s: usize,
    seed: u64,
    density: f64,
    plus: bool,
) -> Result<GeneratedInstance> {
    if rank_x + rank_s >= n {
        return Err(SsnError::InvalidParameter(format!(
            "rank_x + rank_s = {} must be below n = {n}",
            rank_x + rank_s
        )));
    }
    if m == 0 {
        return Err(SsnError::InvalidParameter("need at least one constraint".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(SsnError::InvalidParameter(format!("density {density} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xd = vec![0.0; n];
    let mut sd = vec![0.0; n];
    xd[..rank_x].fill(1.0);
    sd[n - rank_s..].fill(1.0);
    let x = SymBlockMat::from_diag(&xd);
    let s = SymBlockMat::from_diag(&sd);

    // A_1 = I keeps the feasible set bounded
    let mut coeffs = vec![(0..n).map(|i| Triplet::new(0, i, i, 1.0)).collect::<Vec<_>>()];
    for _ in 1..m {
        coeffs.push(random_sparse_constraint(n, density, &mut rng));
    }
    let a = ConstraintMap::new(vec![n], coeffs)?;
    let y: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();

    // off-diagonal entries bounded away from zero pin x* down to a unique
    // diagonal solution; the zero diagonal is what breaks complementarity
    let z = plus.then(|| {
        let mut zm = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = rng.random_range(1.0..2.0);
                zm[(i, j)] = v;
                zm[(j, i)] = v;
            }
        }
        SymBlockMat::from_dense(zm).expect("symmetric by construction")
    });

    let b = a.apply(&x)?;
    let mut c = a.adjoint(&y)?;
    c += &s;
    if let Some(z) = &z {
        c += z;
    }
    let h = if plus { HSpec::Nonneg } else { HSpec::Absent };
    let spec = ProblemSpec::new(c, a, BoxSet::singleton(b), h)?;
    Ok(GeneratedInstance {
        spec,
        known_solution: Some(KnownSolution { x, y, z, s }),
        meta: InstanceMeta {
            family: if plus { "nonsc-sdpplus" } else { "nonsc-sdp" }.into(),
            seed: Some(seed),
            n,
            m,
            strictly_complementary: Some(false),
        },
    })
}

/// SDP whose known solution pair x* = diag(1,…,1,0,…), s* = diag(0,…,0,1,…,1)
/// leaves n − rank_x − rank_s shared zeros, so strict complementarity fails.
pub fn gen_nonsc_sdp(n: usize, m: usize, rank_x: usize, rank_s: usize, seed: u64) -> Result<GeneratedInstance> {
    gen_nonsc_sdp_with(n, m, rank_x, rank_s, seed, DEFAULT_DENSITY)
}

pub fn gen_nonsc_sdp_with(
    n: usize,
    m: usize,
    rank_x: usize,
    rank_s: usize,
    seed: u64,
    density: f64,
) -> Result<GeneratedInstance> {
    nonsc_core(n, m, rank_x, rank_s, seed, density, false)
}

/// As [`gen_nonsc_sdp`] with x ≥ 0 and a nonnegative multiplier z* with zero
/// diagonal added to c.
pub fn gen_nonsc_sdpplus(n: usize, m: usize, rank_x: usize, rank_s: usize, seed: u64) -> Result<GeneratedInstance> {
    gen_nonsc_sdpplus_with(n, m, rank_x, rank_s, seed, DEFAULT_DENSITY)
}

pub fn gen_nonsc_sdpplus_with(
    n: usize,
    m: usize,
    rank_x: usize,
    rank_s: usize,
    seed: u64,
    density: f64,
) -> Result<GeneratedInstance> {
    nonsc_core(n, m, rank_x, rank_s, seed, density, true)
}

/// Lovász theta SDP of a graph on `n` vertices (0-indexed edges):
/// `min ⟨−eeᵀ, X⟩  s.t.  tr X = 1, X_ij = 0 for ij ∈ E, X ⪰ 0`.
pub fn gen_theta(edges: &[(usize, usize)], n: usize) -> Result<ProblemSpec> {
    let (c, a, b) = theta_parts(edges, n)?;
    ProblemSpec::sdp(c, a, b)
}

/// [`gen_theta`] with the extra constraint X ≥ 0.
pub fn gen_thetaplus(edges: &[(usize, usize)], n: usize) -> Result<ProblemSpec> {
    let (c, a, b) = theta_parts(edges, n)?;
    ProblemSpec::new(c, a, BoxSet::singleton(b), HSpec::Nonneg)
}

fn theta_parts(edges: &[(usize, usize)], n: usize) -> Result<(SymBlockMat, ConstraintMap, Vec<f64>)> {
    if n == 0 {
        return Err(SsnError::InvalidParameter("graph has no vertices".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut coeffs = vec![(0..n).map(|i| Triplet::new(0, i, i, 1.0)).collect::<Vec<_>>()];
    for &(u, v) in edges {
        if u == v {
            return Err(SsnError::InvalidParameter(format!("self-loop at vertex {u}")));
        }
        if u >= n || v >= n {
            return Err(SsnError::InvalidParameter(format!("edge ({u}, {v}) outside {n} vertices")));
        }
        if !seen.insert((u.max(v), u.min(v))) {
            return Err(SsnError::InvalidParameter(format!("repeated edge ({u}, {v})")));
        }
        coeffs.push(vec![Triplet::new(0, u, v, 0.5)]);
    }
    let m = coeffs.len();
    let a = ConstraintMap::new(vec![n], coeffs)?;
    let c = SymBlockMat::from_dense(DMatrix::from_element(n, n, -1.0))?;
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    Ok((c, a, b))
}

/// Doubly nonnegative relaxation of `min ½ xᵀQ₀x + c₀ᵀx` over binary x,
/// lifted to `X = [[X₀, x], [xᵀ, 1]] ∈ S^{n}` with `n = dim Q₀ + 1`:
/// `diag(X₀) = x`, `X_nn = 1`, `X ≥ 0`, `X ⪰ 0`.
pub fn gen_biq(q0: &DMatrix<f64>, c0: &[f64]) -> Result<ProblemSpec> {
    let n0 = q0.nrows();
    if q0.ncols() != n0 || c0.len() != n0 {
        return Err(SsnError::dim(format!(
            "Q0 is {}x{}, c0 has {} entries",
            q0.nrows(),
            q0.ncols(),
            c0.len()
        )));
    }
    let n = n0 + 1;
    let mut cm = DMatrix::zeros(n, n);
    cm.view_mut((0, 0), (n0, n0)).copy_from(&(q0 * 0.5));
    for i in 0..n0 {
        cm[(n0, i)] = 0.5 * c0[i];
        cm[(i, n0)] = 0.5 * c0[i];
    }
    let c = SymBlockMat::from_blocks(vec![cm])?;
    let mut coeffs: Vec<Vec<Triplet>> = (0..n0)
        .map(|i| vec![Triplet::new(0, i, i, 1.0), Triplet::new(0, n0, i, -0.5)])
        .collect();
    coeffs.push(vec![Triplet::new(0, n0, n0, 1.0)]);
    let mut b = vec![0.0; n];
    b[n0] = 1.0;
    let a = ConstraintMap::new(vec![n], coeffs)?;
    ProblemSpec::new(c, a, BoxSet::singleton(b), HSpec::Nonneg)
}

/// Relaxed clustering: `min ⟨−W, X⟩  s.t.  Xe = e, tr X = K, X ≥ 0, X ⪰ 0`.
pub fn gen_rcp(w: &DMatrix<f64>, k: usize) -> Result<ProblemSpec> {
    let n = w.nrows();
    if w.ncols() != n || n == 0 {
        return Err(SsnError::dim("affinity matrix must be square and nonempty"));
    }
    if k == 0 || k > n {
        return Err(SsnError::InvalidParameter(format!("cluster count {k} must lie in 1..={n}")));
    }
    let c = SymBlockMat::from_blocks(vec![-w.clone()])?;
    let mut coeffs: Vec<Vec<Triplet>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Triplet::new(0, i, i, 1.0) } else { Triplet::new(0, i, j, 0.5) })
                .collect()
        })
        .collect();
    coeffs.push((0..n).map(|i| Triplet::new(0, i, i, 1.0)).collect());
    let mut b = vec![1.0; n + 1];
    b[n] = k as f64;
    let a = ConstraintMap::new(vec![n], coeffs)?;
    ProblemSpec::new(c, a, BoxSet::singleton(b), HSpec::Nonneg)
}
