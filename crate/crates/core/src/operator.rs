//! Counted linear operators.
//!
//! Every solver iterates on a [`LinearOp`], and every `apply` is one
//! matrix-vector product against the run's counter, which is the unit all
//! convergence-cost comparisons are made in. Preconditioner sweeps are part
//! of the operator application and do not count separately.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::Result;
use crate::precond::{Preconditioner, PreconditionerSpec, Side};
use crate::stencil::StencilMatrix;

/// Shared matvec counter for one solve (or one comparison run).
#[derive(Debug, Clone, Default)]
pub struct MatvecCounter(Arc<AtomicU64>);

impl MatvecCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// A counted linear operator of dimension `n`.
pub trait LinearOp {
    fn n(&self) -> usize;

    /// y = A x, counted as one matvec.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn counter(&self) -> &MatvecCounter;

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.apply_into(x, &mut y);
        y
    }

    /// r = b - A x, costing one matvec.
    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = self.apply(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }
}

/// Bare counted matrix application, used by tests and the dump tooling.
pub struct MatrixOp<'a> {
    a: &'a StencilMatrix,
    counter: MatvecCounter,
}

impl<'a> MatrixOp<'a> {
    pub fn new(a: &'a StencilMatrix) -> Self {
        MatrixOp {
            a,
            counter: MatvecCounter::new(),
        }
    }
}

impl LinearOp for MatrixOp<'_> {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.a.matvec_into(x, y);
        self.counter.bump();
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// The operator handed to solvers: the matrix composed with a prepared
/// preconditioner on the configured side.
///
/// - left: apply = M^-1 (A x); solvers then iterate on the preconditioned
///   residual, and the right-hand side must be transformed with
///   [`PreconditionedOp::precondition_rhs`].
/// - right: apply = A (M^-1 x); solvers iterate in the preconditioned
///   variable, and the final iterate must be mapped back with
///   [`PreconditionedOp::unprecondition_solution`].
///
/// Owns two n-vector work buffers; a `PreconditionedOp` serves one solve at
/// a time (create one per thread for concurrent solves).
pub struct PreconditionedOp {
    a: Arc<StencilMatrix>,
    precond: Preconditioner,
    side: Side,
    counter: MatvecCounter,
    work: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl PreconditionedOp {
    pub fn new(a: Arc<StencilMatrix>, spec: &PreconditionerSpec) -> Result<Self> {
        let precond = Preconditioner::prepare(spec, &a)?;
        let n = a.n();
        Ok(PreconditionedOp {
            a,
            precond,
            side: spec.side,
            counter: MatvecCounter::new(),
            work: RefCell::new((vec![0.0; n], vec![0.0; n])),
        })
    }

    pub fn from_matrix(a: &StencilMatrix, spec: &PreconditionerSpec) -> Result<Self> {
        PreconditionedOp::new(Arc::new(a.clone()), spec)
    }

    pub fn with_counter(mut self, counter: MatvecCounter) -> Self {
        self.counter = counter;
        self
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn matrix(&self) -> &StencilMatrix {
        &self.a
    }

    /// Work buffers held by the operator, in n-vector units (for the
    /// workspace audit).
    pub fn workspace_nvectors(&self) -> u64 {
        2
    }

    /// b -> M^-1 b for left preconditioning; identity for right.
    pub fn precondition_rhs(&self, b: &[f64]) -> Vec<f64> {
        match self.side {
            Side::Left => {
                let mut z = vec![0.0; b.len()];
                let mut w = vec![0.0; b.len()];
                self.precond.apply_into(&self.a, b, &mut z, &mut w);
                z
            }
            Side::Right => b.to_vec(),
        }
    }

    /// y -> M^-1 y for right preconditioning (maps the iterated variable back
    /// to the solution space); identity for left.
    pub fn unprecondition_solution(&self, y: &[f64]) -> Vec<f64> {
        match self.side {
            Side::Right => {
                let mut z = vec![0.0; y.len()];
                let mut w = vec![0.0; y.len()];
                self.precond.apply_into(&self.a, y, &mut z, &mut w);
                z
            }
            Side::Left => y.to_vec(),
        }
    }

    /// Residual of the original system b - A x for a solution-space x;
    /// uncounted, for reporting drift checks.
    pub fn true_residual_uncounted(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        self.a.residual(x, b).expect("dimensions checked at setup")
    }
}

impl LinearOp for PreconditionedOp {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (t, w) = &mut *self.work.borrow_mut();
        match self.side {
            Side::Left => {
                self.a.matvec_into(x, t);
                self.precond.apply_into(&self.a, t, y, w);
            }
            Side::Right => {
                self.precond.apply_into(&self.a, x, t, w);
                self.a.matvec_into(t, y);
            }
        }
        self.counter.bump();
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}
