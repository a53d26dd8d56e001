//! Elements of the generalized Jacobian of F and the operator applications
//! the Newton solve needs.
//!
//! For `M = x + σ(A*y + z − c) = V diag(λ) Vᵀ` (λ nonincreasing, α the
//! strictly positive indices), the chosen element of ∂Π_K(M) is
//!
//! ```text
//! D_K(H) = V (Σ ∘ (Vᵀ H V)) Vᵀ,   Σ = [ 1   v ]    v_ij = λ_i / (λ_i − λ_j)
//!                                   [ vᵀ  0 ]
//! ```
//!
//! Every other operator used by the solver, `(D_K^τ)⁻¹` and
//! `D̄_K = σD_K + D_K (D_K^τ)⁻¹ D_K`, is a congruence with a weight matrix
//! of the same α/ᾱ shape, so a single rank-split routine applies all of
//! them in `O(min(|α|, |ᾱ|) n²)` work.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DMatrixView};

use crate::linalg::{symmetrize, BlockEig, ConstraintMap, EigDecomp, SymBlockMat};
use crate::par::{map_indexed, Exec};
use crate::saddle::{spectral_argument, HSpec, Iterate, ProblemSpec};
use crate::error::Result;

/// Eigenbasis weights with the α/ᾱ block shape: `alpha_coef` on α×α,
/// `cross` (|α| × |ᾱ|) on α×ᾱ, zero on ᾱ×ᾱ.
#[derive(Clone, Debug)]
pub struct SpectralWeights {
    pub alpha_coef: f64,
    pub cross: DMatrix<f64>,
}

impl SpectralWeights {
    /// The full symmetric n×n weight matrix.
    pub fn to_full(&self) -> DMatrix<f64> {
        let p = self.cross.nrows();
        let nb = self.cross.ncols();
        let n = p + nb;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..p {
            for j in 0..p {
                w[(i, j)] = self.alpha_coef;
            }
            for j in 0..nb {
                w[(i, p + j)] = self.cross[(i, j)];
                w[(p + j, i)] = self.cross[(i, j)];
            }
        }
        w
    }

    fn map_cross(&self, alpha_coef: f64, f: impl Fn(f64) -> f64) -> SpectralWeights {
        SpectralWeights {
            alpha_coef,
            cross: self.cross.map(f),
        }
    }
}

/// Regularization parameters per variable block. The engine fills every
/// slot with the same τ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauVec {
    pub tau_y: f64,
    pub tau_z: f64,
    pub tau_x: f64,
    pub tau_u: f64,
    pub tau_q: f64,
}

impl TauVec {
    pub fn uniform(tau: f64) -> Self {
        TauVec {
            tau_y: tau,
            tau_z: tau,
            tau_x: tau,
            tau_u: tau,
            tau_q: tau,
        }
    }
}

/// One element of the generalized Jacobian at a point w.
#[derive(Clone, Debug)]
pub struct JacElement {
    pub eig: EigDecomp,
    /// Σ per block.
    pub sigma_weights: Vec<SpectralWeights>,
    /// Derivative mask of Π_Q at u − σy.
    pub dq_mask: Vec<f64>,
    /// Derivative mask of prox_σh at q − σz (all ones when h is absent).
    pub dh_mask: SymBlockMat,
    pub sigma: f64,
    pub h_absent: bool,
    pub exec: Exec,
    /// (Vᵀ A_i V)∘(Vᵀ A_i V) per constraint and touched block, built on
    /// first use when it fits the cache budget.
    gram_sq: OnceLock<Option<Vec<GramSq>>>,
}

/// Squared Gram blocks of one constraint, keyed by block index.
type GramSq = Vec<(usize, DMatrix<f64>)>;

// Entries allowed in the constraint Gram cache (64 MiB of f64).
const GRAM_CACHE_ENTRIES: usize = 1 << 23;

fn sigma_weights(b: &BlockEig) -> SpectralWeights {
    let p = b.n_pos();
    let n = b.dim();
    let lam = &b.values;
    let cross = DMatrix::from_fn(p, n - p, |i, j| {
        let li = lam[i];
        let lj = lam[p + j];
        li / (li - lj)
    });
    SpectralWeights {
        alpha_coef: 1.0,
        cross,
    }
}

/// Builds a Jacobian element at `w`. At exact kinks (λ = 0, or a bound hit
/// exactly) the zero branch is taken.
pub fn build_jac_element(w: &Iterate, p: &ProblemSpec, sigma: f64) -> Result<JacElement> {
    let m = spectral_argument(w, p, sigma, Exec::default());
    let eig = crate::linalg::sym_eig(&m)?;
    Ok(JacElement::from_parts(eig, w, p, sigma, Exec::default()))
}

impl JacElement {
    /// Assembles the element from a decomposition already computed for F(w).
    pub fn from_parts(eig: EigDecomp, w: &Iterate, p: &ProblemSpec, sigma: f64, exec: Exec) -> Self {
        let sigma_weights = eig.blocks.iter().map(sigma_weights).collect();
        let (lo, hi) = (p.q.lo(), p.q.hi());
        let dq_mask = w
            .u
            .iter()
            .zip(&w.y)
            .enumerate()
            .map(|(i, (u, y))| {
                let r = u - sigma * y;
                if lo[i] < r && r < hi[i] {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let dh_mask = match p.h {
            HSpec::Absent => w.q.map(|_| 1.0),
            h => {
                let (l, u) = h.bounds();
                (&w.q - &w.z.scaled(sigma)).map(|g| if l < g && g < u { 1.0 } else { 0.0 })
            }
        };
        JacElement {
            eig,
            sigma_weights,
            dq_mask,
            dh_mask,
            sigma,
            h_absent: p.h.is_absent(),
            exec,
            gram_sq: OnceLock::new(),
        }
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.eig.blocks.iter().map(BlockEig::dim).collect()
    }

    /// Σ̄ = σΣ + Σ²∘(σ / (1 + στ − Σ)) per block: α×α coefficient
    /// (1 + στ)/τ and cross entries σ(1 + στ)v / (1 + στ − v).
    pub fn sigma_bar(&self, tau_x: f64) -> Vec<SpectralWeights> {
        sigma_bar(self, tau_x)
    }

    /// Σ_T of the closed-form inverse: α×α coefficient 1/τ, cross entries
    /// σv / (1 + στ − v).
    pub fn sigma_t(&self, tau_x: f64) -> Vec<SpectralWeights> {
        let s = self.sigma;
        self.sigma_weights
            .iter()
            .map(|w| w.map_cross(1.0 / tau_x, |v| s * v / (1.0 + s * tau_x - v)))
            .collect()
    }

    /// Applies `V (W ∘ (Vᵀ H V)) Vᵀ` blockwise with the rank-split formula.
    pub fn apply_weighted(&self, weights: &[SpectralWeights], h: &SymBlockMat) -> SymBlockMat {
        let blocks = map_indexed(self.exec, self.eig.blocks.len(), 2, |k| {
            congruence_lowrank(&self.eig.blocks[k], &weights[k], h.block(k))
        });
        SymBlockMat::from_blocks_unchecked(blocks)
    }

    /// Diagonal of `H ↦ V (W ∘ (Vᵀ H V)) Vᵀ` in the orthonormal basis of
    /// symmetric unit matrices, stored entrywise. O(n⁴) per block.
    pub fn weighted_diag(&self, weights: &[SpectralWeights]) -> SymBlockMat {
        let blocks = map_indexed(self.exec, self.eig.blocks.len(), 2, |k| {
            let b = &self.eig.blocks[k];
            let w = weights[k].to_full();
            let v = &b.vectors;
            let n = b.dim();
            let p2 = v.component_mul(v);
            let pwp = &p2 * &w * p2.transpose();
            let mut out = DMatrix::zeros(n, n);
            let mut r = vec![0.0; n];
            let mut wr = vec![0.0; n];
            for i in 0..n {
                out[(i, i)] = pwp[(i, i)];
                for j in 0..i {
                    for (t, rt) in r.iter_mut().enumerate() {
                        *rt = v[(i, t)] * v[(j, t)];
                    }
                    let mut cross = 0.0;
                    for (kk, wk) in wr.iter_mut().enumerate() {
                        *wk = (0..n).map(|l| w[(kk, l)] * r[l]).sum();
                        cross += r[kk] * *wk;
                    }
                    let d = pwp[(i, j)] + cross;
                    out[(i, j)] = d;
                    out[(j, i)] = d;
                }
            }
            out
        });
        SymBlockMat::from_blocks_unchecked(blocks)
    }

    /// `⟨A_i, V (W ∘ (Vᵀ A_i V)) Vᵀ⟩` for every constraint.
    pub fn constraint_diag(&self, weights: &[SpectralWeights], a: &ConstraintMap) -> Vec<f64> {
        let full: Vec<DMatrix<f64>> = weights.iter().map(SpectralWeights::to_full).collect();
        let weigh = |g: &[(usize, DMatrix<f64>)]| g.iter().map(|(b, g2)| g2.component_mul(&full[*b]).sum()).sum();
        let cached = self.gram_sq.get_or_init(|| {
            let per: usize = self.eig.blocks.iter().map(|b| b.dim() * b.dim()).sum();
            (per.saturating_mul(a.m()) <= GRAM_CACHE_ENTRIES)
                .then(|| map_indexed(self.exec, a.m(), 16, |k| self.gram_sq_of(a, k)))
        });
        match cached {
            Some(g) if g.len() == a.m() => g.iter().map(|g| weigh(g)).collect(),
            _ => map_indexed(self.exec, a.m(), 16, |k| weigh(&self.gram_sq_of(a, k))),
        }
    }

    fn gram_sq_of(&self, a: &ConstraintMap, k: usize) -> GramSq {
        // A_i V row by row, then one product with Vᵀ
        let mut per_block: Vec<Option<DMatrix<f64>>> = vec![None; self.eig.blocks.len()];
        for t in &a.coeffs()[k] {
            let v = &self.eig.blocks[t.block].vectors;
            let av = per_block[t.block].get_or_insert_with(|| DMatrix::zeros(v.nrows(), v.ncols()));
            for c in 0..v.ncols() {
                av[(t.i, c)] += t.value * v[(t.j, c)];
                if t.i != t.j {
                    av[(t.j, c)] += t.value * v[(t.i, c)];
                }
            }
        }
        per_block
            .into_iter()
            .enumerate()
            .filter_map(|(b, av)| {
                av.map(|av| {
                    let g = self.eig.blocks[b].vectors.tr_mul(&av);
                    (b, g.component_mul(&g))
                })
            })
            .collect()
    }

    /// Same value as [`JacElement::apply_weighted`] via the full n×n
    /// congruence.
    pub fn apply_weighted_dense(&self, weights: &[SpectralWeights], h: &SymBlockMat) -> SymBlockMat {
        let blocks = map_indexed(self.exec, self.eig.blocks.len(), 2, |k| {
            congruence_full(&self.eig.blocks[k], &weights[k].to_full(), h.block(k))
        });
        SymBlockMat::from_blocks_unchecked(blocks)
    }
}

/// Σ̄ for the given τ_x.
pub fn sigma_bar(el: &JacElement, tau_x: f64) -> Vec<SpectralWeights> {
    let s = el.sigma;
    let st = 1.0 + s * tau_x;
    el.sigma_weights
        .iter()
        .map(|w| w.map_cross(st / tau_x, |v| s * st * v / (st - v)))
        .collect()
}

/// D_K(H) through the full congruence `V (Σ ∘ (Vᵀ H V)) Vᵀ`.
pub fn apply_dk(el: &JacElement, h: &SymBlockMat) -> SymBlockMat {
    el.apply_weighted_dense(&el.sigma_weights, h)
}

/// D_K(H) with the rank-split formula; switches to the complementary form
/// when |α| > n/2.
pub fn apply_dk_lowrank(el: &JacElement, h: &SymBlockMat) -> SymBlockMat {
    el.apply_weighted(&el.sigma_weights, h)
}

/// (D_K^τ)⁻¹(H) = σ/(1+στ) H + 1/(1+στ) V (Σ_T ∘ (Vᵀ H V)) Vᵀ,
/// the inverse of `D_K^τ = (1/σ + τ) I − D_K / σ`.
pub fn apply_dktau_inv(el: &JacElement, tau_x: f64, h: &SymBlockMat) -> SymBlockMat {
    let st = 1.0 + el.sigma * tau_x;
    let mut out = el.apply_weighted(&el.sigma_t(tau_x), h);
    out.scale_mut(1.0 / st);
    out.axpy(el.sigma / st, h);
    out
}

/// D_K^τ(H) = (1/σ + τ) H − D_K(H)/σ.
pub fn apply_dktau(el: &JacElement, tau_x: f64, h: &SymBlockMat) -> SymBlockMat {
    let mut out = apply_dk_lowrank(el, h);
    out.scale_mut(-1.0 / el.sigma);
    out.axpy(1.0 / el.sigma + tau_x, h);
    out
}

/// D̄_K(H) = σ D_K(H) + D_K (D_K^τ)⁻¹ D_K(H), one Σ̄-weighted congruence.
pub fn apply_dkbar(el: &JacElement, tau_x: f64, h: &SymBlockMat) -> SymBlockMat {
    el.apply_weighted(&sigma_bar(el, tau_x), h)
}

/// (J + τI) d for the element `el`, with J the derivative of F.
///
/// When h is absent the z and q slots of `d` are ignored and the
/// corresponding output slots are zero.
pub fn jac_matvec(el: &JacElement, p: &ProblemSpec, tau: TauVec, d: &Iterate) -> Iterate {
    let s = el.sigma;
    let mut dm = p.a.adjoint_unchecked(&d.y, el.exec);
    if !el.h_absent {
        dm += &d.z;
    }
    dm.scale_mut(s);
    dm += &d.x;
    let dk = apply_dk_lowrank(el, &dm);

    // D_Q(du − σ dy)
    let dq_term: Vec<f64> = el
        .dq_mask
        .iter()
        .zip(d.u.iter().zip(&d.y))
        .map(|(mask, (du, dy))| mask * (du - s * dy))
        .collect();
    let adk = p.a.apply_unchecked(&dk, el.exec);
    let y: Vec<f64> = adk
        .iter()
        .zip(&dq_term)
        .zip(&d.y)
        .map(|((a, t), dy)| a - t + tau.tau_y * dy)
        .collect();
    let u: Vec<f64> = d
        .u
        .iter()
        .zip(&dq_term)
        .map(|(du, t)| (du - t) / s + tau.tau_u * du)
        .collect();
    let mut x = &d.x - &dk;
    x.scale_mut(1.0 / s);
    x.axpy(tau.tau_x, &d.x);

    let (z, q) = if el.h_absent {
        (d.z.scaled(0.0), d.q.scaled(0.0))
    } else {
        let dh_term = el.dh_mask.hadamard(&(&d.q - &d.z.scaled(s)));
        let mut z = &dk - &dh_term;
        z.axpy(tau.tau_z, &d.z);
        let mut q = &d.q - &dh_term;
        q.scale_mut(1.0 / s);
        q.axpy(tau.tau_q, &d.q);
        (z, q)
    };
    Iterate { y, z, x, u, q }
}

fn congruence_full(b: &BlockEig, w: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let v = &b.vectors;
    let g = v.transpose() * h * v;
    let mut out = v * g.component_mul(w) * v.transpose();
    symmetrize(&mut out);
    out
}

/// `V (W ∘ (Vᵀ H V)) Vᵀ` for W with the α/ᾱ shape.
fn congruence_lowrank(b: &BlockEig, w: &SpectralWeights, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.dim();
    let p = w.cross.nrows();
    debug_assert_eq!(p, b.n_pos());
    if p == 0 {
        return DMatrix::zeros(n, n);
    }
    if p == n {
        return h * w.alpha_coef;
    }
    let va = b.vectors.columns(0, p);
    let vb = b.vectors.columns(p, n - p);
    if 2 * p <= n {
        rank_split(va, vb, w.alpha_coef, &w.cross, h)
    } else {
        // W = a·E − W', where W' is zero on α×α, a on ᾱ×ᾱ, a − cross on
        // the off-diagonal block: same shape with the roles of α, ᾱ swapped.
        let a = w.alpha_coef;
        let comp_cross = w.cross.map(|l| a - l).transpose();
        let mut out = h * a;
        out -= rank_split(vb, va, a, &comp_cross, h);
        out
    }
}

/// `Y = H̃ + H̃ᵀ`, `H̃ = V_a [ (a/2)(U V_a) V_aᵀ + (L ∘ (U V_b)) V_bᵀ ]`, `U = V_aᵀ H`.
fn rank_split(
    va: DMatrixView<f64>,
    vb: DMatrixView<f64>,
    a: f64,
    cross: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> DMatrix<f64> {
    let u = va.transpose() * h;
    let gaa = &u * va;
    let gab = &u * vb;
    let t = (gaa * (0.5 * a)) * va.transpose() + gab.component_mul(cross) * vb.transpose();
    let half = va * t;
    let mut out = &half + half.transpose();
    symmetrize(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, ConstraintMap, Triplet};
    use crate::saddle::BoxSet;

    fn element_for(m: &SymBlockMat, sigma: f64) -> JacElement {
        let eig = sym_eig(m).unwrap();
        let dims = m.block_dims();
        let a = ConstraintMap::new(dims.clone(), vec![]).unwrap();
        let p = ProblemSpec::new(SymBlockMat::zeros(&dims), a, BoxSet::singleton(vec![]), HSpec::Absent).unwrap();
        let w = Iterate::zeros(&p);
        JacElement::from_parts(eig, &w, &p, sigma, Exec::Sequential)
    }

    #[test]
    fn sigma_of_two_point_spectrum() {
        let el = element_for(&SymBlockMat::from_diag(&[2.0, -1.0]), 1.0);
        let full = el.sigma_weights[0].to_full();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 2.0 / 3.0, 2.0 / 3.0, 0.0]);
        assert!((full - expect).amax() < 1e-15);
    }

    #[test]
    fn all_positive_spectrum_is_identity() {
        let el = element_for(&SymBlockMat::from_diag(&[3.0, 1.0, 0.5]), 1.0);
        let h = SymBlockMat::from_dense(DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0])).unwrap();
        assert!((&apply_dk(&el, &h) - &h).norm() < 1e-13);
        assert!((&apply_dk_lowrank(&el, &h) - &h).norm() < 1e-13);
    }

    #[test]
    fn all_negative_spectrum_is_zero() {
        let el = element_for(&SymBlockMat::from_diag(&[-3.0, -1.0, 0.0]), 1.0);
        let h = SymBlockMat::identity(&[3]);
        assert_eq!(apply_dk(&el, &h).norm(), 0.0);
        assert_eq!(apply_dk_lowrank(&el, &h).norm(), 0.0);
    }

    #[test]
    fn dk_of_identity_on_two_point_spectrum() {
        // Diagonal input: V = I, so Vᵀ I V = I and Σ ∘ I = diag(1, 0).
        let el = element_for(&SymBlockMat::from_diag(&[2.0, -1.0]), 1.0);
        let out = apply_dk(&el, &SymBlockMat::identity(&[2]));
        assert!((&out - &SymBlockMat::from_diag(&[1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn sigma_bar_entries() {
        // σ = 1, τ = 1, v = 2/3 → l = 1·2·(2/3)/(2 − 2/3) = 1; α×α coefficient 2.
        let el = element_for(&SymBlockMat::from_diag(&[2.0, -1.0]), 1.0);
        let sb = sigma_bar(&el, 1.0);
        assert!((sb[0].alpha_coef - 2.0).abs() < 1e-15);
        assert!((sb[0].cross[(0, 0)] - 1.0).abs() < 1e-15);
        // v → 0 (λ_j → −∞ relative to λ_i) gives l → 0
        let el = element_for(&SymBlockMat::from_diag(&[1e-8, -1e8]), 1.0);
        assert!(sigma_bar(&el, 1.0)[0].cross[(0, 0)] < 1e-15);
    }

    #[test]
    fn dktau_inverse_on_eigenspaces() {
        let el = element_for(&SymBlockMat::from_diag(&[2.0, -1.0]), 1.0);
        // positive eigenspace: D_K^τ acts as 1/σ + τ − 1/σ = 1
        let hp = SymBlockMat::from_diag(&[1.0, 0.0]);
        assert!((&apply_dktau_inv(&el, 1.0, &hp) - &hp).norm() < 1e-15);
        // negative eigenspace: D_K^τ acts as 2, inverse σ/(1+στ) = 1/2
        let hn = SymBlockMat::from_diag(&[0.0, 1.0]);
        assert!((&apply_dktau_inv(&el, 1.0, &hn) - &hn.scaled(0.5)).norm() < 1e-15);
    }

    #[test]
    fn lowrank_paths_agree_on_both_branches() {
        // |α| = 1 of 4 (direct) and |α| = 3 of 4 (complement)
        for diag in [[3.0, -0.5, -1.0, -2.0], [3.0, 2.0, 0.5, -2.0]] {
            let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag));
            m[(0, 1)] = 0.3;
            m[(1, 0)] = 0.3;
            m[(2, 3)] = -0.7;
            m[(3, 2)] = -0.7;
            let el = element_for(&SymBlockMat::from_dense(m).unwrap(), 0.7);
            let h = SymBlockMat::from_dense(DMatrix::from_fn(4, 4, |i, j| ((i + 1) * (j + 1)) as f64 + (i + j) as f64)).unwrap();
            let dense = apply_dk(&el, &h);
            let fast = apply_dk_lowrank(&el, &h);
            assert!((&dense - &fast).norm() < 1e-12 * (1.0 + dense.norm()));
            for tau in [1e-6, 1.0] {
                let sb = sigma_bar(&el, tau);
                let d1 = el.apply_weighted_dense(&sb, &h);
                let d2 = el.apply_weighted(&sb, &h);
                assert!((&d1 - &d2).norm() < 1e-11 * (1.0 + d1.norm()));
            }
        }
    }

    #[test]
    fn zero_direction_maps_to_zero() {
        let a = ConstraintMap::new(vec![2], vec![vec![Triplet::new(0, 0, 0, 1.0)]]).unwrap();
        let p = ProblemSpec::new(SymBlockMat::from_diag(&[1.0, -1.0]), a, BoxSet::singleton(vec![1.0]), HSpec::Nonneg).unwrap();
        let w = Iterate::zeros(&p);
        let el = build_jac_element(&w, &p, 1.0).unwrap();
        let out = jac_matvec(&el, &p, TauVec::uniform(0.3), &w);
        assert_eq!(out.norm(), 0.0);
    }

    #[test]
    fn singleton_box_mask_is_zero() {
        let a = ConstraintMap::new(vec![2], vec![vec![Triplet::new(0, 0, 0, 1.0)]; 2]).unwrap();
        let p = ProblemSpec::new(
            SymBlockMat::identity(&[2]),
            a,
            BoxSet::new(vec![1.0, 0.0], vec![1.0, 2.0]).unwrap(),
            HSpec::Absent,
        )
        .unwrap();
        let mut w = Iterate::zeros(&p);
        w.u = vec![1.0, 1.0];
        let el = build_jac_element(&w, &p, 1.0).unwrap();
        assert_eq!(el.dq_mask, vec![0.0, 1.0]);
    }

    fn mixed_element() -> (JacElement, ConstraintMap) {
        let m = SymBlockMat::from_blocks(vec![
            DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.4, -0.5, 0.3, -0.2, 0.3, 0.2]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.7, 0.7, 0.5]),
        ])
        .unwrap();
        let a = ConstraintMap::new(
            vec![3, 2],
            vec![
                vec![Triplet::new(0, 0, 0, 1.0), Triplet::new(1, 1, 0, -2.0)],
                vec![Triplet::new(0, 2, 1, 0.5), Triplet::new(0, 1, 1, 3.0)],
            ],
        )
        .unwrap();
        (element_for(&m, 0.7), a)
    }

    #[test]
    fn weighted_diag_matches_unit_probes() {
        let (el, _) = mixed_element();
        let w = el.sigma_bar(0.3);
        let diag = el.weighted_diag(&w);
        let dims = el.block_dims();
        let len: usize = dims.iter().map(|d| d * (d + 1) / 2).sum();
        for k in 0..len {
            let mut e = vec![0.0; len];
            e[k] = 1.0;
            let u = SymBlockMat::from_svec(&dims, &e).unwrap();
            let want = u.dot(&el.apply_weighted_dense(&w, &u));
            assert!((diag_entry(&diag, &dims, k) - want).abs() < 1e-12, "{k}");
        }
    }

    fn diag_entry(d: &SymBlockMat, dims: &[usize], k: usize) -> f64 {
        let mut pos = 0;
        for (b, &n) in dims.iter().enumerate() {
            for j in 0..n {
                for i in j..n {
                    if pos == k {
                        return d.block(b)[(i, j)];
                    }
                    pos += 1;
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn constraint_diag_matches_direct_evaluation() {
        let (el, a) = mixed_element();
        for tau in [1.0, 1e-3] {
            let w = el.sigma_bar(tau);
            let got = el.constraint_diag(&w, &a);
            for (i, g) in got.iter().enumerate() {
                let mut e = vec![0.0; a.m()];
                e[i] = 1.0;
                let ai = a.adjoint(&e).unwrap();
                let want = ai.dot(&el.apply_weighted_dense(&w, &ai));
                assert!((g - want).abs() < 1e-10 * (1.0 + want.abs()), "{g} vs {want}");
            }
        }
    }
}
