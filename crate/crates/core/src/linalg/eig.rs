use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SymBlockMat;
use crate::error::{Result, SsnError};
use crate::par::{map_indexed, Exec};

/// Spectral data of one symmetric block: `M = V diag(λ) Vᵀ`, λ nonincreasing.
#[derive(Clone, Debug)]
pub struct BlockEig {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl BlockEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// |α|: the number of strictly positive eigenvalues. Because λ is sorted,
    /// α is the leading index range `0..n_pos`.
    pub fn n_pos(&self) -> usize {
        self.values.iter().take_while(|&&l| l > 0.0).count()
    }

    /// V diag(f(λ)) Vᵀ.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = f(l);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = &scaled * self.vectors.transpose();
        symmetrize(&mut out);
        out
    }

    /// Σ_{j<p} λ_j v_j v_jᵀ for the leading `p` columns, computed in O(p n²).
    fn positive_part(&self) -> DMatrix<f64> {
        let n = self.dim();
        let p = self.n_pos();
        if p == 0 {
            return DMatrix::zeros(n, n);
        }
        let va = self.vectors.columns(0, p);
        let mut scaled = va.clone_owned();
        for j in 0..p {
            scaled.column_mut(j).scale_mut(self.values[j]);
        }
        let mut out = scaled * va.transpose();
        symmetrize(&mut out);
        out
    }
}

/// Per-block eigendecomposition of a [`SymBlockMat`].
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub blocks: Vec<BlockEig>,
}

impl EigDecomp {
    /// Eigenvalues of every block concatenated.
    pub fn all_values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.all_values().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn reconstruct(&self) -> SymBlockMat {
        SymBlockMat::from_blocks_unchecked(self.blocks.iter().map(|b| b.reconstruct_with(|l| l)).collect())
    }

    /// Index set α per block (strictly positive eigenvalues).
    pub fn alpha(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| (0..b.n_pos()).collect()).collect()
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn block_eig(m: &DMatrix<f64>) -> BlockEig {
    let n = m.nrows();
    if n == 1 {
        return BlockEig {
            vectors: DMatrix::identity(1, 1),
            values: DVector::from_element(1, m[(0, 0)]),
        };
    }
    let se = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep the decomposition's order
    order.sort_by(|&a, &b| se.eigenvalues[b].total_cmp(&se.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| se.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    BlockEig { vectors, values }
}

/// Full symmetric eigendecomposition, eigenvalues nonincreasing per block.
pub fn sym_eig(m: &SymBlockMat) -> Result<EigDecomp> {
    sym_eig_with(m, Exec::default())
}

pub fn sym_eig_with(m: &SymBlockMat, exec: Exec) -> Result<EigDecomp> {
    if !m.is_finite() {
        return Err(SsnError::NonFinite("eigendecomposition input"));
    }
    let blocks = map_indexed(exec, m.num_blocks(), 2, |k| block_eig(m.block(k)));
    Ok(EigDecomp { blocks })
}

/// Π_K(M) = V max(Λ,0) Vᵀ, returned with the decomposition it came from.
pub fn project_psd(m: &SymBlockMat) -> Result<(SymBlockMat, EigDecomp)> {
    project_psd_with(m, Exec::default())
}

pub fn project_psd_with(m: &SymBlockMat, exec: Exec) -> Result<(SymBlockMat, EigDecomp)> {
    let eig = sym_eig_with(m, exec)?;
    let blocks = eig.blocks.iter().map(BlockEig::positive_part).collect();
    Ok((SymBlockMat::from_blocks_unchecked(blocks), eig))
}

/// Π_K applied with an already computed decomposition.
pub fn psd_part(eig: &EigDecomp) -> SymBlockMat {
    SymBlockMat::from_blocks_unchecked(eig.blocks.iter().map(BlockEig::positive_part).collect())
}
