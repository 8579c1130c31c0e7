//! Sparse iterative solvers with Krylov subspace recycling for sequences of
//! slowly changing linear systems.
//!
//! The library provides:
//!
//! - structured-grid stencil matrices in diagonal (banded) storage,
//! - smoothing preconditioners (relaxed Jacobi, SSOR),
//! - the baseline solvers GMRES(m) and BiCGStab,
//! - the recycling solvers rGCROT(m,k) and single-space rBiCGStab,
//! - a hybrid sequence controller that builds a recycle space with rGCROT
//!   and then freezes it for rBiCGStab,
//! - problem generators including a toy 2D fractional-step flow driver that
//!   emits pressure-Poisson right-hand-side sequences,
//! - a benchmark harness with CSV reporting (see the `kryrec` binary).

// index loops mirror the stencil/banded math; negated comparisons reject NaN
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bicgstab;
pub mod config;
pub mod error;
pub mod gmres;
pub mod grid;
pub mod harness;
pub mod hybrid;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod precond;
pub mod problems;
pub mod rbicgstab;
pub mod recycle;
pub mod report;
pub mod rgcrot;
pub mod stencil;

pub use config::{ShadowChoice, SolverConfig, TolMode};
pub use error::{Error, Result};
pub use grid::GridShape;
pub use operator::{LinearOp, MatvecCounter, PreconditionedOp};
pub use precond::{PrecondKind, PreconditionerSpec, Side};
pub use recycle::RecycleSpace;
pub use report::{SolveReport, SolveStatus};
pub use rgcrot::GcrotParams;
pub use stencil::{DenseMatrix, StencilMatrix};
