//! Symmetric block matrices, the constraint operator, and the spectral
//! primitives everything else is built on.

mod constraint;
mod eig;
mod symmat;

pub use constraint::{ConstraintMap, Triplet};
pub use eig::{project_psd, project_psd_with, psd_part, sym_eig, sym_eig_with, BlockEig, EigDecomp};
pub use symmat::SymBlockMat;

pub(crate) use eig::symmetrize;
