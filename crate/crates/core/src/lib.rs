//! Primal-dual semismooth Newton solver for semidefinite programs of the form
//!
//! ```text
//! min ⟨c, x⟩ + h(x)   s.t.  A(x) ∈ Q,  x ⪰ 0
//! ```
//!
//! where `Q` is a box in Rᵐ and `h` an elementwise indicator (none, `x ≥ 0`,
//! or a box). The solver drives the residual map `F(w)` of the augmented
//! Lagrangian saddle problem to zero with regularized, inexact Newton steps,
//! a nonmonotone acceptance test, and an eigenvalue-thresholding correction
//! step near the solution.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod jacobian;
pub mod linalg;
pub mod newton;
pub mod par;
pub mod problems;
pub mod saddle;

pub use error::{Result, SsnError};
pub use linalg::{ConstraintMap, EigDecomp, SymBlockMat, Triplet};
pub use newton::{solve, SolveReport, SolveStatus, SolverConfig};
pub use par::Exec;
pub use saddle::{BoxSet, HSpec, Iterate, ProblemSpec, ResidualVec};
