use nalgebra::DMatrix;

use super::SymBlockMat;
use crate::error::{Result, SsnError};
use crate::par::{map_indexed, Exec};

/// One stored coefficient of a constraint matrix, lower triangle (`i >= j`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl Triplet {
    pub fn new(block: usize, i: usize, j: usize, value: f64) -> Self {
        Triplet { block, i, j, value }
    }
}

/// The linear map A: Sⁿ → Rᵐ, A(X)_k = ⟨A_k, X⟩, with sparse symmetric
/// coefficient matrices A_k.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMap {
    block_dims: Vec<usize>,
    coeffs: Vec<Vec<Triplet>>,
    // block -> (constraint, i, j, value), used by the adjoint
    by_block: Vec<Vec<(usize, usize, usize, f64)>>,
}

const PAR_MIN_CONSTRAINTS: usize = 64;

impl ConstraintMap {
    /// Validates indices and normalizes every triplet into the lower triangle.
    pub fn new(block_dims: Vec<usize>, coeffs: Vec<Vec<Triplet>>) -> Result<Self> {
        if block_dims.contains(&0) {
            return Err(SsnError::dim("zero-sized block"));
        }
        let mut coeffs = coeffs;
        for (k, row) in coeffs.iter_mut().enumerate() {
            for t in row.iter_mut() {
                let Some(&d) = block_dims.get(t.block) else {
                    return Err(SsnError::dim(format!(
                        "constraint {k}: block index {} out of range",
                        t.block
                    )));
                };
                if t.i >= d || t.j >= d {
                    return Err(SsnError::dim(format!(
                        "constraint {k}: entry ({},{}) outside block {} of size {d}",
                        t.i, t.j, t.block
                    )));
                }
                if !t.value.is_finite() {
                    return Err(SsnError::NonFinite("constraint coefficient"));
                }
                if t.i < t.j {
                    std::mem::swap(&mut t.i, &mut t.j);
                }
            }
        }
        let mut by_block = vec![Vec::new(); block_dims.len()];
        for (k, row) in coeffs.iter().enumerate() {
            for t in row {
                by_block[t.block].push((k, t.i, t.j, t.value));
            }
        }
        Ok(ConstraintMap {
            block_dims,
            coeffs,
            by_block,
        })
    }

    pub fn m(&self) -> usize {
        self.coeffs.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn coeffs(&self) -> &[Vec<Triplet>] {
        &self.coeffs
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().map(Vec::len).sum()
    }

    /// A(X). Off-diagonal triplets contribute twice (symmetric inner product).
    pub fn apply(&self, x: &SymBlockMat) -> Result<Vec<f64>> {
        self.apply_with(x, Exec::default())
    }

    pub fn apply_with(&self, x: &SymBlockMat, exec: Exec) -> Result<Vec<f64>> {
        if x.block_dims() != self.block_dims {
            return Err(SsnError::dim(format!(
                "apply: map expects blocks {:?}, got {:?}",
                self.block_dims,
                x.block_dims()
            )));
        }
        Ok(self.apply_unchecked(x, exec))
    }

    pub(crate) fn apply_unchecked(&self, x: &SymBlockMat, exec: Exec) -> Vec<f64> {
        map_indexed(exec, self.m(), PAR_MIN_CONSTRAINTS, |k| {
            self.coeffs[k]
                .iter()
                .map(|t| {
                    let v = x.block(t.block)[(t.i, t.j)];
                    if t.i == t.j {
                        t.value * v
                    } else {
                        2.0 * t.value * v
                    }
                })
                .sum()
        })
    }

    /// A*(y) = Σ_k y_k A_k.
    pub fn adjoint(&self, y: &[f64]) -> Result<SymBlockMat> {
        self.adjoint_with(y, Exec::default())
    }

    pub fn adjoint_with(&self, y: &[f64], exec: Exec) -> Result<SymBlockMat> {
        if y.len() != self.m() {
            return Err(SsnError::dim(format!(
                "adjoint: expected {} multipliers, got {}",
                self.m(),
                y.len()
            )));
        }
        Ok(self.adjoint_unchecked(y, exec))
    }

    pub(crate) fn adjoint_unchecked(&self, y: &[f64], exec: Exec) -> SymBlockMat {
        let blocks = map_indexed(exec, self.block_dims.len(), 2, |b| {
            let d = self.block_dims[b];
            let mut m = DMatrix::zeros(d, d);
            for &(k, i, j, v) in &self.by_block[b] {
                let w = y[k] * v;
                m[(i, j)] += w;
                if i != j {
                    m[(j, i)] += w;
                }
            }
            m
        });
        SymBlockMat::from_blocks_unchecked(blocks)
    }

    /// A_k as a dense block matrix.
    pub fn constraint_matrix(&self, k: usize) -> SymBlockMat {
        let mut e = vec![0.0; self.m()];
        e[k] = 1.0;
        self.adjoint_unchecked(&e, Exec::Sequential)
    }

    /// Estimate of the operator norm ‖A‖ (largest singular value) by power
    /// iteration on A A*.
    pub fn op_norm_estimate(&self, iters: usize) -> f64 {
        let m = self.m();
        if m == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 * 0.618).fract()).collect();
        let mut lam = 0.0;
        for _ in 0..iters.max(1) {
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|a| *a /= nv);
            let w = self.apply_unchecked(&self.adjoint_unchecked(&v, Exec::Sequential), Exec::Sequential);
            lam = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            v = w;
        }
        lam.sqrt()
    }
}
