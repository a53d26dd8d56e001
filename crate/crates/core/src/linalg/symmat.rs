use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};

/// Block-diagonal symmetric matrix. Each block is stored dense.
///
/// The space carries the trace (Frobenius) inner product, so off-diagonal
/// entries are counted twice by [`SymBlockMat::dot`].
#[derive(Clone, Debug, PartialEq)]
pub struct SymBlockMat {
    blocks: Vec<DMatrix<f64>>,
}

impl SymBlockMat {
    pub fn zeros(dims: &[usize]) -> Self {
        SymBlockMat {
            blocks: dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        SymBlockMat {
            blocks: dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
        }
    }

    /// Single dense block.
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        Self::from_blocks(vec![m])
    }

    /// Builds from blocks, rejecting non-square or asymmetric input.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != b.ncols() {
                return Err(SsnError::dim(format!("block {k} is not square")));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(SsnError::NonFinite("matrix block"));
            }
            let scale = 1.0 + b.amax();
            for i in 0..b.nrows() {
                for j in 0..i {
                    if (b[(i, j)] - b[(j, i)]).abs() > 1e-12 * scale {
                        return Err(SsnError::dim(format!(
                            "block {k} is not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        let mut m = SymBlockMat { blocks };
        m.symmetrize();
        Ok(m)
    }

    /// Builds from blocks assumed symmetric; averages with the transpose.
    pub(crate) fn from_blocks_unchecked(blocks: Vec<DMatrix<f64>>) -> Self {
        let mut m = SymBlockMat { blocks };
        m.symmetrize();
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymBlockMat {
            blocks: vec![DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))],
        }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<DMatrix<f64>> {
        self.blocks
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total order n (sum of block dimensions).
    pub fn order(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    /// Number of free entries, Σ d(d+1)/2.
    pub fn svec_len(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows() * (b.nrows() + 1) / 2).sum()
    }

    pub fn conforms(&self, other: &SymBlockMat) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.nrows() == b.nrows())
    }

    pub fn check_conforms(&self, other: &SymBlockMat) -> Result<()> {
        if self.conforms(other) {
            Ok(())
        } else {
            Err(SsnError::dim(format!(
                "block structure {:?} vs {:?}",
                self.block_dims(),
                other.block_dims()
            )))
        }
    }

    /// Trace inner product ⟨A, B⟩ = Σ_blocks tr(A_k B_k).
    pub fn dot(&self, other: &SymBlockMat) -> f64 {
        debug_assert!(self.conforms(other));
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// self += a * other
    pub fn axpy(&mut self, a: f64, other: &SymBlockMat) {
        debug_assert!(self.conforms(other));
        for (s, o) in self.blocks.iter_mut().zip(&other.blocks) {
            s.zip_apply(o, |x, y| *x += a * y);
        }
    }

    pub fn scale_mut(&mut self, a: f64) {
        for b in &mut self.blocks {
            *b *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> SymBlockMat {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    /// Applies `f` to every entry. `f` must not break symmetry (it is applied
    /// identically to (i,j) and (j,i)).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymBlockMat {
        SymBlockMat {
            blocks: self.blocks.iter().map(|b| b.map(&f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &SymBlockMat, f: impl Fn(f64, f64) -> f64) -> SymBlockMat {
        debug_assert!(self.conforms(other));
        SymBlockMat {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a.zip_map(b, &f))
                .collect(),
        }
    }

    /// Hadamard product.
    pub fn hadamard(&self, other: &SymBlockMat) -> SymBlockMat {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn min_entry(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Forces exact symmetry by averaging with the transpose.
    pub fn symmetrize(&mut self) {
        for b in &mut self.blocks {
            let n = b.nrows();
            for i in 0..n {
                for j in 0..i {
                    let v = 0.5 * (b[(i, j)] + b[(j, i)]);
                    b[(i, j)] = v;
                    b[(j, i)] = v;
                }
            }
        }
    }

    /// Packs the lower triangles into an orthonormal coordinate vector
    /// (off-diagonal entries scaled by √2), so that `svec(A)·svec(B) = ⟨A,B⟩`.
    pub fn svec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.svec_len());
        let r2 = std::f64::consts::SQRT_2;
        for b in &self.blocks {
            for j in 0..b.ncols() {
                for i in j..b.nrows() {
                    out.push(if i == j { b[(i, j)] } else { r2 * b[(i, j)] });
                }
            }
        }
        out
    }

    /// Inverse of [`SymBlockMat::svec`].
    pub fn from_svec(dims: &[usize], v: &[f64]) -> Result<Self> {
        let total: usize = dims.iter().map(|d| d * (d + 1) / 2).sum();
        if v.len() != total {
            return Err(SsnError::dim(format!("svec length {} vs {}", v.len(), total)));
        }
        let r2 = std::f64::consts::SQRT_2;
        let mut pos = 0;
        let mut blocks = Vec::with_capacity(dims.len());
        for &d in dims {
            let mut b = DMatrix::zeros(d, d);
            for j in 0..d {
                for i in j..d {
                    let val = if i == j { v[pos] } else { v[pos] / r2 };
                    b[(i, j)] = val;
                    b[(j, i)] = val;
                    pos += 1;
                }
            }
            blocks.push(b);
        }
        Ok(SymBlockMat { blocks })
    }
}

impl Add for &SymBlockMat {
    type Output = SymBlockMat;
    fn add(self, rhs: &SymBlockMat) -> SymBlockMat {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &SymBlockMat {
    type Output = SymBlockMat;
    fn sub(self, rhs: &SymBlockMat) -> SymBlockMat {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &SymBlockMat {
    type Output = SymBlockMat;
    fn neg(self) -> SymBlockMat {
        self.map(|a| -a)
    }
}

impl Mul<f64> for &SymBlockMat {
    type Output = SymBlockMat;
    fn mul(self, rhs: f64) -> SymBlockMat {
        self.scaled(rhs)
    }
}

impl AddAssign<&SymBlockMat> for SymBlockMat {
    fn add_assign(&mut self, rhs: &SymBlockMat) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SymBlockMat> for SymBlockMat {
    fn sub_assign(&mut self, rhs: &SymBlockMat) {
        self.axpy(-1.0, rhs);
    }
}

/// Row-major serialized form: one nested array per block.
#[derive(Serialize, Deserialize)]
struct SymBlockMatRepr {
    blocks: Vec<Vec<Vec<f64>>>,
}

impl Serialize for SymBlockMat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = SymBlockMatRepr {
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    (0..b.nrows())
                        .map(|i| b.row(i).iter().copied().collect())
                        .collect()
                })
                .collect(),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymBlockMat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SymBlockMatRepr::deserialize(d)?;
        let mut blocks = Vec::with_capacity(repr.blocks.len());
        for rows in repr.blocks {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(serde::de::Error::custom("block is not square"));
            }
            blocks.push(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
        }
        SymBlockMat::from_blocks(blocks).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_counts_off_diagonal_twice() {
        let a = SymBlockMat::from_dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0])).unwrap();
        let b = SymBlockMat::identity(&[2]);
        assert_eq!(a.dot(&b), 4.0);
        assert_eq!(a.norm_sq(), 1.0 + 4.0 + 4.0 + 9.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        assert!(SymBlockMat::from_dense(m).is_err());
    }

    #[test]
    fn svec_is_isometric() {
        let a = SymBlockMat::from_blocks(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 3.0]),
            DMatrix::from_element(1, 1, 5.0),
        ])
        .unwrap();
        let v = a.svec();
        let nrm: f64 = v.iter().map(|x| x * x).sum();
        assert!((nrm - a.norm_sq()).abs() < 1e-12);
        let back = SymBlockMat::from_svec(&a.block_dims(), &v).unwrap();
        assert!((&back - &a).norm() < 1e-15);
    }

    #[test]
    fn block_dims_survive_arithmetic() {
        let a = SymBlockMat::identity(&[3, 1, 2]);
        let b = &(&a * 2.0) - &a;
        assert_eq!(b.block_dims(), vec![3, 1, 2]);
    }

    #[test]
    fn serde_round_trip() {
        let a = SymBlockMat::from_blocks(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 3.0]),
            DMatrix::from_element(1, 1, -1.0),
        ])
        .unwrap();
        let s = serde_json::to_string(&a).unwrap();
        let b: SymBlockMat = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
