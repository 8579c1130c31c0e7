//! Solve and sequence reports: termination status, matvec accounting,
//! residual histories, and the workspace audit.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Breakdown,
    Stagnation,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Breakdown => "breakdown",
            SolveStatus::Stagnation => "stagnation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "converged" => Some(SolveStatus::Converged),
            "max_iterations" => Some(SolveStatus::MaxIterations),
            "breakdown" => Some(SolveStatus::Breakdown),
            "stagnation" => Some(SolveStatus::Stagnation),
            _ => None,
        }
    }
}

/// Which residual the history records: the true residual b - Ax (right
/// preconditioning) or the preconditioned residual M^-1(b - Ax) (left).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    TrueResidual,
    Preconditioned,
}

impl ResidualKind {
    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::TrueResidual => "true",
            ResidualKind::Preconditioned => "preconditioned",
        }
    }
}

/// Worst-case deviations from the orthogonality and recurrence relations the
/// solvers maintain, filled when `SolverConfig::record_invariants` is set.
#[derive(Debug, Clone, Default)]
pub struct InvariantDiagnostics {
    /// max ||V^T V - I||_F over cycles.
    pub arnoldi_orthonormality: f64,
    /// max ||A V_m - C B - V_{m+1} H||_F / ||A||_est over cycles
    /// (B empty for plain GMRES).
    pub arnoldi_relation: f64,
    /// max over cycles and columns of ||C^T v_j||.
    pub inner_c_orthogonality: f64,
    /// max over cycles of ||C^T (r_old - A V y - C z)|| / ||r_old||.
    pub separated_least_squares: f64,
    /// max over iterations of ||C^T r_i|| / ||r0_hat|| (rBiCGStab).
    pub residual_c_orthogonality: f64,
    /// Operator norm estimate backing the relative bounds.
    pub op_norm_estimate: f64,
}

impl InvariantDiagnostics {
    pub(crate) fn absorb(&mut self, other: &InvariantDiagnostics) {
        self.arnoldi_orthonormality = self.arnoldi_orthonormality.max(other.arnoldi_orthonormality);
        self.arnoldi_relation = self.arnoldi_relation.max(other.arnoldi_relation);
        self.inner_c_orthogonality = self.inner_c_orthogonality.max(other.inner_c_orthogonality);
        self.separated_least_squares = self.separated_least_squares.max(other.separated_least_squares);
        self.residual_c_orthogonality = self.residual_c_orthogonality.max(other.residual_c_orthogonality);
        self.op_norm_estimate = self.op_norm_estimate.max(other.op_norm_estimate);
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Counted matrix-vector products consumed by this solve.
    pub matvecs: u64,
    /// GMRES-family cycles or BiCGStab-family iterations.
    pub cycles_or_iterations: u64,
    /// (matvec count since solve start, residual norm). Begins at matvec 0
    /// with ||r0||; within GMRES-family cycles the entries are the
    /// least-squares residual estimates, and the entries indexed by
    /// `cycle_marks` are recomputed residuals at cycle boundaries.
    pub residual_history: Vec<(u64, f64)>,
    /// Indices into `residual_history` marking cycle/iteration boundaries.
    pub cycle_marks: Vec<usize>,
    pub wall_time_s: f64,
    pub final_residual_norm: f64,
    pub residual_kind: ResidualKind,
    /// Solver workspace in units of n-vectors (auxiliary storage beyond the
    /// matrix, the right-hand side, and the solution).
    pub storage_nvectors: u64,
    /// Set when a recycling solver's post-correction true residual failed to
    /// certify the convergence that the updated residual claimed.
    pub drift: bool,
    /// Set when the solve was aborted because the residual norm grew past
    /// `divergence_factor * ||r0||` (status is then `Breakdown`).
    pub diverged: bool,
    pub diagnostics: Option<InvariantDiagnostics>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Residual norms at cycle/iteration boundaries (starting from ||r0||).
    pub fn boundary_norms(&self) -> Vec<f64> {
        let mut v = vec![self.residual_history[0].1];
        v.extend(self.cycle_marks.iter().map(|&i| self.residual_history[i].1));
        v
    }
}

/// Tags the solver used for one system of a sequence run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Gmres,
    Bicgstab,
    Rgcrot,
    Rbicgstab,
}

impl SolverTag {
    pub fn name(&self) -> &'static str {
        match self {
            SolverTag::Gmres => "gmres",
            SolverTag::Bicgstab => "bicgstab",
            SolverTag::Rgcrot => "rgcrot",
            SolverTag::Rbicgstab => "rbicgstab",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gmres" => Some(SolverTag::Gmres),
            "bicgstab" => Some(SolverTag::Bicgstab),
            "rgcrot" => Some(SolverTag::Rgcrot),
            "rbicgstab" => Some(SolverTag::Rbicgstab),
            _ => None,
        }
    }
}

/// A solve with instability detected: the iterated residual norm exceeded
/// `divergence_factor * ||r0||`.
#[derive(Debug, Clone)]
pub struct InstabilityEvent {
    pub system_index: usize,
    pub residual_ratio: f64,
    pub resolved_by_switchback: bool,
}

/// One system of a sequence run.
#[derive(Debug, Clone)]
pub struct SystemRecord {
    pub system_index: usize,
    pub solver: SolverTag,
    /// ||r0|| of this system (the iterated right-hand side norm at x0 = 0).
    pub r0_norm: f64,
    /// Matvecs spent on space maintenance attributed to this system
    /// (e.g. the QR refresh when the hybrid controller switches solvers).
    pub setup_matvecs: u64,
    pub report: SolveReport,
}

impl SystemRecord {
    pub fn total_matvecs(&self) -> u64 {
        self.setup_matvecs + self.report.matvecs
    }
}

#[derive(Debug, Clone, Default)]
pub struct SequenceReport {
    pub systems: Vec<SystemRecord>,
    pub events: Vec<InstabilityEvent>,
    pub total_wall_time_s: f64,
}

impl SequenceReport {
    pub fn total_matvecs(&self) -> u64 {
        self.systems.iter().map(|s| s.total_matvecs()).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.systems.iter().all(|s| s.report.converged())
    }

    pub fn matvecs_for(&self, tag: SolverTag) -> u64 {
        self.systems
            .iter()
            .filter(|s| s.solver == tag)
            .map(|s| s.total_matvecs())
            .sum()
    }
}
