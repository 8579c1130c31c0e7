use crate::error::{Error, Result};

/// How `tol` is interpreted against the iterated right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TolMode {
    /// Converged when ||r|| <= tol.
    Absolute,
    /// Converged when ||r|| <= tol * ||b||.
    Relative,
}

impl TolMode {
    pub fn name(&self) -> &'static str {
        match self {
            TolMode::Absolute => "absolute",
            TolMode::Relative => "relative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "absolute" | "abs" => Ok(TolMode::Absolute),
            "relative" | "rel" => Ok(TolMode::Relative),
            other => Err(Error::InvalidConfig(format!(
                "unknown tolerance mode '{other}' (expected absolute|relative)"
            ))),
        }
    }
}

/// Choice of the shadow vector for the BiCGStab family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowChoice {
    /// r~ = r0 (the default).
    InitialResidual,
    /// Seeded random shadow vector, mainly for breakdown testing.
    Random(u64),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub tol: f64,
    pub tol_mode: TolMode,
    /// Iteration cap expressed in matrix-vector products, so GMRES cycles
    /// (m+1 matvecs each) and BiCGStab iterations (2 matvecs each) are
    /// capped in the same unit.
    pub max_matvecs: u64,
    /// Restart length for the GMRES family.
    pub m: usize,
    pub shadow: ShadowChoice,
    /// When set, a solve aborts with breakdown status once the iterated
    /// residual norm exceeds `factor * ||r0||`; used by the hybrid
    /// controller to detect instability.
    pub divergence_factor: Option<f64>,
    /// Record per-cycle orthogonality/recurrence diagnostics in the report.
    pub record_invariants: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            tol_mode: TolMode::Relative,
            max_matvecs: 2000,
            m: 30,
            shadow: ShadowChoice::InitialResidual,
            divergence_factor: None,
            record_invariants: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_matvecs == 0 {
            return Err(Error::InvalidConfig("max_matvecs must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("restart length m must be >= 1".into()));
        }
        if let Some(f) = self.divergence_factor {
            if !(f > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "divergence_factor must exceed 1, got {f}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64, mode: TolMode) -> Self {
        self.tol = tol;
        self.tol_mode = mode;
        self
    }

    pub fn with_restart(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_max_matvecs(mut self, cap: u64) -> Self {
        self.max_matvecs = cap;
        self
    }

    /// Convergence threshold on the residual norm for rhs norm `b_norm`.
    pub fn threshold(&self, b_norm: f64) -> f64 {
        match self.tol_mode {
            TolMode::Absolute => self.tol,
            TolMode::Relative => self.tol * b_norm,
        }
    }
}
