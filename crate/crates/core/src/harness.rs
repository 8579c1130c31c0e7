//! Benchmark harness: parse run configs, build problems and sequences, run
//! solver comparisons with the paper-style counting conventions, and emit
//! CSV reports.
//!
//! Comparison modes: `independent` advances each solver's own flow sequence
//! (its solutions feed its next right-hand side), `shared_rhs` lets the
//! first solver define the right-hand sides and every other solver re-solve
//! the identical systems. For pre-generated sequences the two coincide.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::bicgstab::bicgstab;
use crate::config::{SolverConfig, TolMode};
use crate::error::{Error, Result};
use crate::gmres::gmres_m;
use crate::grid::GridShape;
use crate::hybrid::{HybridPolicy, HybridState};
use crate::io;
use crate::linalg::norm2;
use crate::operator::{LinearOp, PreconditionedOp};
use crate::precond::{PrecondKind, PreconditionerSpec, Side};
use crate::problems::{
    fractional_step_sequence, make_convection_diffusion, make_poisson, make_porous_mask,
    perturbed_rhs_sequence, FlowDriver, FlowParams, Geometry, PoissonBc, SystemSequence,
};
use crate::recycle::RecycleSpace;
use crate::report::{
    InstabilityEvent, ResidualKind, SequenceReport, SolverTag, SystemRecord,
};
use crate::rgcrot::{rgcrot, GcrotParams};
use crate::stencil::StencilMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonMode {
    Independent,
    SharedRhs,
}

impl ComparisonMode {
    pub fn name(&self) -> &'static str {
        match self {
            ComparisonMode::Independent => "independent",
            ComparisonMode::SharedRhs => "shared_rhs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(ComparisonMode::Independent),
            "shared_rhs" => Ok(ComparisonMode::SharedRhs),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode '{other}' (expected independent|shared_rhs)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Poisson { shape: GridShape, bc: PoissonBc },
    ConvectionDiffusion { shape: GridShape, peclet: f64, wind: [f64; 3] },
    Porous { shape: GridShape, porosity: f64 },
    /// Pre-generated sequence directory; the sequence spec is ignored.
    SequenceDir(PathBuf),
}

#[derive(Debug, Clone)]
pub enum SequenceSpec {
    PerturbedRhs {
        steps: usize,
        amplitude: f64,
        jitter: f64,
        random_base: bool,
    },
    FractionalStep {
        steps: usize,
        params: FlowParams,
        geometry: Geometry,
    },
}

#[derive(Debug, Clone)]
pub enum SolverEntry {
    Gmres { m: usize },
    Bicgstab,
    Rgcrot(GcrotParams),
    Hybrid(HybridPolicy),
}

impl SolverEntry {
    pub fn label(&self) -> String {
        match self {
            SolverEntry::Gmres { m } => format!("gmres{m}"),
            SolverEntry::Bicgstab => "bicgstab".into(),
            SolverEntry::Rgcrot(p) => format!("rgcrot{}x{}", p.m, p.k_max),
            SolverEntry::Hybrid(p) => {
                format!("hybrid{}_{}x{}", p.n_switch, p.gcrot.m, p.gcrot.k_max)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub sequence: SequenceSpec,
    pub seed: u64,
    pub solver_cfg: SolverConfig,
    pub precond: PreconditionerSpec,
    pub solvers: Vec<SolverEntry>,
    pub mode: ComparisonMode,
    pub out_dir: PathBuf,
}

// ---------------------------------------------------------------------------
// config file parsing (plain `key = value` lines with section dots)
// ---------------------------------------------------------------------------

pub struct KeyValues {
    path: PathBuf,
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse("run config", path, ln + 1, "expected 'key = value'")
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string(), ln + 1));
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    fn typed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.iter().rev().find(|(k, _, _)| k == key) {
            None => Ok(None),
            Some((_, v, ln)) => v.parse::<T>().map(Some).map_err(|e| {
                Error::parse("run config", &self.path, *ln, format!("bad value for {key}: {e}"))
            }),
        }
    }

    fn typed_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.typed(key)?.unwrap_or(default))
    }

    fn invalid(&self, msg: impl Into<String>) -> Error {
        Error::InvalidConfig(format!("{}: {}", self.path.display(), msg.into()))
    }
}

pub fn parse_run_config(kv: &KeyValues) -> Result<RunConfig> {
    let seed: u64 = kv.typed_or("seed", 0)?;

    let shape = GridShape::new(
        kv.typed_or("problem.nx", 32)?,
        kv.typed_or("problem.ny", 32)?,
        kv.typed_or("problem.nz", 1)?,
    )?;
    let kind = kv.get("problem.kind").unwrap_or("convection_diffusion");
    let problem = match kind {
        "poisson" => {
            let bc = match kv.get("problem.bc").unwrap_or("dirichlet") {
                "dirichlet" => PoissonBc::Dirichlet,
                "periodic_x" => PoissonBc::PeriodicX,
                other => return Err(kv.invalid(format!("unknown problem.bc '{other}'"))),
            };
            ProblemSpec::Poisson { shape, bc }
        }
        "convection_diffusion" => {
            let wind_str = kv.get("problem.wind").unwrap_or("1,0,0");
            let parts: Vec<&str> = wind_str.split(',').collect();
            if parts.len() != 3 {
                return Err(kv.invalid("problem.wind must be 'wx,wy,wz'"));
            }
            let mut wind = [0.0; 3];
            for (w, p) in wind.iter_mut().zip(&parts) {
                *w = p
                    .trim()
                    .parse()
                    .map_err(|e| kv.invalid(format!("bad problem.wind component: {e}")))?;
            }
            ProblemSpec::ConvectionDiffusion {
                shape,
                peclet: kv.typed_or("problem.peclet", 5.0)?,
                wind,
            }
        }
        "porous" => ProblemSpec::Porous {
            shape,
            porosity: kv.typed_or("problem.porosity", 0.8)?,
        },
        "sequence_dir" => {
            let p = kv
                .get("problem.path")
                .ok_or_else(|| kv.invalid("problem.kind=sequence_dir needs problem.path"))?;
            ProblemSpec::SequenceDir(PathBuf::from(p))
        }
        other => return Err(kv.invalid(format!("unknown problem.kind '{other}'"))),
    };

    let steps: usize = kv.typed_or("sequence.steps", 10)?;
    let sequence = match kv.get("sequence.kind").unwrap_or("perturbed_rhs") {
        "perturbed_rhs" => SequenceSpec::PerturbedRhs {
            steps,
            amplitude: kv.typed_or("sequence.amplitude", 0.01)?,
            jitter: kv.typed_or("sequence.jitter", 0.0)?,
            random_base: kv.get("sequence.rhs").unwrap_or("random") == "random",
        },
        "fractional_step" => {
            let geometry = match kv.get("sequence.geometry").unwrap_or("channel") {
                "channel" => Geometry::Channel,
                "porous" => Geometry::Porous {
                    porosity: kv.typed_or("sequence.porosity", 0.8)?,
                    seed: kv.typed_or("sequence.porous_seed", seed)?,
                },
                other => return Err(kv.invalid(format!("unknown sequence.geometry '{other}'"))),
            };
            SequenceSpec::FractionalStep {
                steps,
                params: FlowParams {
                    dt: kv.typed_or("sequence.dt", 1e-3)?,
                    nu: kv.typed_or("sequence.nu", 0.05)?,
                    forcing: kv.typed_or("sequence.forcing", 1.0)?,
                    perturbation: kv.typed_or("sequence.perturbation", 0.5)?,
                    seed,
                    pressure_tol: kv.typed_or("sequence.pressure_tol", 1e-10)?,
                },
                geometry,
            }
        }
        other => return Err(kv.invalid(format!("unknown sequence.kind '{other}'"))),
    };

    // per-scenario default tolerances: channel-style runs converge on an
    // absolute threshold, porous-style on a tight relative one
    let (default_tol, default_mode) = match (&problem, &sequence) {
        (ProblemSpec::Porous { .. }, _) => (1e-10, TolMode::Relative),
        (_, SequenceSpec::FractionalStep { geometry: Geometry::Porous { .. }, .. }) => {
            (1e-10, TolMode::Relative)
        }
        (_, SequenceSpec::FractionalStep { geometry: Geometry::Channel, .. }) => {
            (1e-6, TolMode::Absolute)
        }
        _ => (1e-8, TolMode::Relative),
    };
    let tol: f64 = kv.typed_or("solver.tol", default_tol)?;
    let tol_mode = match kv.get("solver.tol_mode") {
        Some(s) => TolMode::parse(s)?,
        None => default_mode,
    };
    let mut solver_cfg = SolverConfig::default().with_tol(tol, tol_mode);
    solver_cfg.max_matvecs = kv.typed_or("solver.max_matvecs", 2000)?;
    solver_cfg.record_invariants = kv.typed_or("solver.record_invariants", false)?;

    let mut precond = match kv.get("precond.kind") {
        Some(s) => match PrecondKind::parse(s)? {
            PrecondKind::Identity => PreconditionerSpec::identity(),
            PrecondKind::Jacobi => PreconditionerSpec::jacobi(),
            PrecondKind::Ssor => PreconditionerSpec::ssor(),
        },
        None => PreconditionerSpec::jacobi(),
    };
    precond.sweeps = kv.typed_or("precond.sweeps", precond.sweeps)?;
    precond.relax = kv.typed_or("precond.relax", precond.relax)?;
    precond.validate()?;

    let gcrot_of = |prefix: &str, default_m: usize, default_k: usize| -> Result<GcrotParams> {
        let m = kv.typed_or(&format!("{prefix}.m"), default_m)?;
        let k = kv.typed_or(&format!("{prefix}.k"), default_k)?;
        let mut p = GcrotParams::new(m, k);
        p.trunc_keep = kv.typed_or(&format!("{prefix}.trunc_keep"), p.trunc_keep)?;
        p.select_pool = kv.typed_or(&format!("{prefix}.select_pool"), p.select_pool)?;
        p.select_count = kv.typed_or(&format!("{prefix}.select_count"), p.select_count)?;
        p.keep_latest = kv.typed_or(&format!("{prefix}.keep_latest"), p.keep_latest)?;
        p.validate()?;
        Ok(p)
    };

    let list = kv.get("solvers").unwrap_or("gmres,bicgstab,rgcrot,hybrid");
    let mut solvers = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "gmres" => solvers.push(SolverEntry::Gmres {
                m: kv.typed_or("gmres.m", 30)?,
            }),
            "bicgstab" => solvers.push(SolverEntry::Bicgstab),
            "rgcrot" => solvers.push(SolverEntry::Rgcrot(gcrot_of("rgcrot", 10, 40)?)),
            "hybrid" => {
                let default_m: usize = kv.typed_or("rgcrot.m", 10)?;
                let default_k: usize = kv.typed_or("rgcrot.k", 40)?;
                let gcrot = gcrot_of("hybrid", default_m, default_k)?;
                let mut policy = HybridPolicy::new(kv.typed_or("hybrid.n_switch", 5)?, gcrot);
                policy.divergence_factor =
                    kv.typed_or("hybrid.divergence_factor", policy.divergence_factor)?;
                policy.allow_switchback =
                    kv.typed_or("hybrid.allow_switchback", policy.allow_switchback)?;
                let refresh: usize = kv.typed_or("hybrid.refresh_every_n", 0)?;
                policy.refresh_every_n = (refresh > 0).then_some(refresh);
                policy.validate()?;
                solvers.push(SolverEntry::Hybrid(policy));
            }
            other => return Err(kv.invalid(format!("unknown solver '{other}'"))),
        }
    }
    if solvers.is_empty() {
        return Err(kv.invalid("at least one solver is required"));
    }

    let mode = match kv.get("mode") {
        Some(s) => ComparisonMode::parse(s)?,
        None => ComparisonMode::Independent,
    };
    let out_dir = PathBuf::from(kv.get("out").unwrap_or("out"));

    Ok(RunConfig {
        problem,
        sequence,
        seed,
        solver_cfg,
        precond,
        solvers,
        mode,
        out_dir,
    })
}

// ---------------------------------------------------------------------------
// problem/sequence construction
// ---------------------------------------------------------------------------

pub fn build_matrix(problem: &ProblemSpec, seed: u64) -> Result<StencilMatrix> {
    match problem {
        ProblemSpec::Poisson { shape, bc } => Ok(make_poisson(*shape, *bc)),
        ProblemSpec::ConvectionDiffusion { shape, peclet, wind } => {
            make_convection_diffusion(*shape, *peclet, *wind)
        }
        ProblemSpec::Porous { shape, porosity } => make_porous_mask(*shape, *porosity, seed),
        ProblemSpec::SequenceDir(dir) => Ok(io::read_sequence_dir(dir)?.matrix),
    }
}

/// Materialize the run's sequence (the fixed-RHS view used by shared mode
/// and by pre-generated inputs).
pub fn build_sequence(cfg: &RunConfig) -> Result<SystemSequence> {
    if let ProblemSpec::SequenceDir(dir) = &cfg.problem {
        return io::read_sequence_dir(dir);
    }
    match &cfg.sequence {
        SequenceSpec::PerturbedRhs {
            steps,
            amplitude,
            jitter,
            random_base,
        } => {
            let matrix = build_matrix(&cfg.problem, cfg.seed)?;
            let n = matrix.n();
            let b0 = if *random_base {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
                (0..n).map(|_| rng.gen::<f64>() - 0.5).collect()
            } else {
                vec![1.0; n]
            };
            perturbed_rhs_sequence(matrix, &b0, *steps, *amplitude, *jitter, cfg.seed)
        }
        SequenceSpec::FractionalStep { steps, params, geometry } => {
            let shape = match &cfg.problem {
                ProblemSpec::Poisson { shape, .. }
                | ProblemSpec::ConvectionDiffusion { shape, .. }
                | ProblemSpec::Porous { shape, .. } => *shape,
                ProblemSpec::SequenceDir(_) => unreachable!(),
            };
            fractional_step_sequence(shape, *steps, *params, *geometry)
        }
    }
}

// ---------------------------------------------------------------------------
// per-system sequence solvers
// ---------------------------------------------------------------------------

/// Stateful per-system solver: the recycling entries carry their space from
/// one system to the next.
#[allow(clippy::large_enum_variant)]
pub enum SeqSolver {
    Gmres { m: usize, op: PreconditionedOp },
    Bicgstab { op: PreconditionedOp },
    Rgcrot { params: GcrotParams, op: PreconditionedOp, space: RecycleSpace },
    Hybrid(HybridState),
}

impl SeqSolver {
    /// Total counted matvecs consumed so far (the run's operator counters).
    pub fn matvecs_consumed(&self) -> u64 {
        match self {
            SeqSolver::Gmres { op, .. }
            | SeqSolver::Bicgstab { op }
            | SeqSolver::Rgcrot { op, .. } => op.counter().count(),
            SeqSolver::Hybrid(state) => state.matvecs_consumed(),
        }
    }

    pub fn build(
        entry: &SolverEntry,
        matrix: Arc<StencilMatrix>,
        precond: &PreconditionerSpec,
    ) -> Result<Self> {
        Ok(match entry {
            SolverEntry::Gmres { m } => SeqSolver::Gmres {
                m: *m,
                op: PreconditionedOp::new(matrix, &precond.clone().with_side(Side::Left))?,
            },
            SolverEntry::Bicgstab => SeqSolver::Bicgstab {
                op: PreconditionedOp::new(matrix, &precond.clone().with_side(Side::Right))?,
            },
            SolverEntry::Rgcrot(params) => {
                let n = matrix.n();
                SeqSolver::Rgcrot {
                    params: *params,
                    op: PreconditionedOp::new(matrix, &precond.clone().with_side(Side::Left))?,
                    space: RecycleSpace::empty(n, params.k_max),
                }
            }
            SolverEntry::Hybrid(policy) => {
                SeqSolver::Hybrid(HybridState::new(matrix, policy.clone(), precond)?)
            }
        })
    }

    /// Solve system `t`; returns the solution in the unpreconditioned
    /// variable, the record, and any instability event.
    pub fn solve(
        &mut self,
        t: usize,
        b: &[f64],
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, SystemRecord, Option<InstabilityEvent>)> {
        match self {
            SeqSolver::Gmres { m, op } => {
                let mut cfg2 = cfg.clone();
                cfg2.m = *m;
                let b_hat = op.precondition_rhs(b);
                let x0 = vec![0.0; b.len()];
                let (x, mut rep) = gmres_m(op, &b_hat, &x0, &cfg2)?;
                rep.residual_kind = ResidualKind::Preconditioned;
                let rec = SystemRecord {
                    system_index: t,
                    solver: SolverTag::Gmres,
                    r0_norm: rep.residual_history[0].1,
                    setup_matvecs: 0,
                    report: rep,
                };
                Ok((x, rec, None))
            }
            SeqSolver::Bicgstab { op } => {
                let x0 = vec![0.0; b.len()];
                let (y, rep) = bicgstab(op, b, &x0, cfg)?;
                let x = op.unprecondition_solution(&y);
                let rec = SystemRecord {
                    system_index: t,
                    solver: SolverTag::Bicgstab,
                    r0_norm: rep.residual_history[0].1,
                    setup_matvecs: 0,
                    report: rep,
                };
                Ok((x, rec, None))
            }
            SeqSolver::Rgcrot { params, op, space } => {
                let mut cfg2 = cfg.clone();
                cfg2.m = params.m;
                let b_hat = op.precondition_rhs(b);
                let x0 = vec![0.0; b.len()];
                let (x, evolved, mut rep) = rgcrot(op, &b_hat, &x0, space, params, &cfg2)?;
                *space = evolved;
                rep.residual_kind = ResidualKind::Preconditioned;
                let rec = SystemRecord {
                    system_index: t,
                    solver: SolverTag::Rgcrot,
                    r0_norm: rep.residual_history[0].1,
                    setup_matvecs: 0,
                    report: rep,
                };
                Ok((x, rec, None))
            }
            SeqSolver::Hybrid(state) => {
                let step = state.solve_system(b, cfg)?;
                Ok((step.solution, step.record, step.event))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// comparison runner
// ---------------------------------------------------------------------------

pub struct ComparisonOutcome {
    pub runs: Vec<(String, SequenceReport)>,
    pub exit_ok: bool,
}

pub fn run_comparison(cfg: &RunConfig) -> Result<ComparisonOutcome> {
    let driver_coupled = matches!(cfg.sequence, SequenceSpec::FractionalStep { .. })
        && !matches!(cfg.problem, ProblemSpec::SequenceDir(_));

    let mut runs = Vec::new();
    if !driver_coupled {
        // fixed right-hand sides: the two comparison modes coincide
        let seq = build_sequence(cfg)?;
        for entry in &cfg.solvers {
            let rep = run_over_fixed_sequence(entry, &seq, cfg)?;
            runs.push((entry.label(), rep));
        }
    } else {
        match cfg.mode {
            ComparisonMode::Independent => {
                for entry in &cfg.solvers {
                    let (rep, _) = run_driver_coupled(entry, cfg)?;
                    runs.push((entry.label(), rep));
                }
            }
            ComparisonMode::SharedRhs => {
                // the first solver is the master: its solutions define the
                // right-hand sides everyone else re-solves
                let master = &cfg.solvers[0];
                let (rep, seq) = run_driver_coupled(master, cfg)?;
                runs.push((master.label(), rep));
                for entry in &cfg.solvers[1..] {
                    let rep = run_over_fixed_sequence(entry, &seq, cfg)?;
                    runs.push((entry.label(), rep));
                }
            }
        }
    }

    // disambiguate repeated solver labels so their files don't collide
    let mut seen = std::collections::HashMap::new();
    for (label, _) in runs.iter_mut() {
        let n = seen.entry(label.clone()).or_insert(0usize);
        *n += 1;
        if *n > 1 {
            *label = format!("{label}_{n}");
        }
    }

    fs::create_dir_all(&cfg.out_dir)?;
    for (label, rep) in &runs {
        write_history_csv(&cfg.out_dir.join(format!("history_{label}.csv")), rep)?;
        export_trace_csv(&cfg.out_dir.join(format!("trace_{label}.csv")), rep)?;
    }
    write_summary_csv(&cfg.out_dir.join("summary.csv"), &runs)?;

    let exit_ok = runs.iter().all(|(_, r)| r.all_converged());
    Ok(ComparisonOutcome { runs, exit_ok })
}

pub fn run_over_fixed_sequence(
    entry: &SolverEntry,
    seq: &SystemSequence,
    cfg: &RunConfig,
) -> Result<SequenceReport> {
    let start = Instant::now();
    let matrix = Arc::new(seq.matrix.clone());
    let mut solver = SeqSolver::build(entry, matrix, &cfg.precond)?;
    let mut report = SequenceReport::default();
    for (t, b) in seq.rhs.iter().enumerate() {
        let (_, rec, event) = solver.solve(t, b, &cfg.solver_cfg)?;
        report.systems.push(rec);
        report.events.extend(event);
    }
    report.total_wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Advance the solver's own flow sequence: each system's right-hand side is
/// produced by the driver from this solver's previous corrections. Solver
/// failures are recorded and the run continues. Also returns the realized
/// sequence so a shared-rhs run can replay it.
pub fn run_driver_coupled(
    entry: &SolverEntry,
    cfg: &RunConfig,
) -> Result<(SequenceReport, SystemSequence)> {
    let (steps, params, geometry) = match &cfg.sequence {
        SequenceSpec::FractionalStep { steps, params, geometry } => (*steps, *params, *geometry),
        _ => {
            return Err(Error::InvalidConfig(
                "driver-coupled runs need sequence.kind = fractional_step".into(),
            ))
        }
    };
    let shape = match &cfg.problem {
        ProblemSpec::Poisson { shape, .. }
        | ProblemSpec::ConvectionDiffusion { shape, .. }
        | ProblemSpec::Porous { shape, .. } => *shape,
        ProblemSpec::SequenceDir(_) => {
            return Err(Error::InvalidConfig(
                "driver-coupled runs need a grid problem, not a sequence dir".into(),
            ))
        }
    };
    let start = Instant::now();
    let mut driver = FlowDriver::new(shape, params, geometry)?;
    let matrix = Arc::new(driver.matrix().clone());
    let mut solver = SeqSolver::build(entry, matrix.clone(), &cfg.precond)?;
    let mut report = SequenceReport::default();
    let mut rhs = Vec::with_capacity(steps);
    for t in 0..steps {
        let b = driver.step_rhs()?;
        let (x, rec, event) = solver.solve(t, &b, &cfg.solver_cfg)?;
        driver.apply_pressure(&x);
        report.systems.push(rec);
        report.events.extend(event);
        rhs.push(b);
    }
    report.total_wall_time_s = start.elapsed().as_secs_f64();
    let mut meta = crate::problems::SequenceMeta {
        generator: "fractional_step".into(),
        seed: params.seed,
        ..Default::default()
    };
    meta.push("steps", steps);
    meta.push("coupled_solver", entry.label());
    let seq = SystemSequence {
        matrix: matrix.as_ref().clone(),
        rhs,
        matrix_epoch: 0,
        meta,
    };
    Ok((report, seq))
}

// ---------------------------------------------------------------------------
// CSV emission and parsing
// ---------------------------------------------------------------------------

fn f(v: f64) -> String {
    io::fmt_f64(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub system_index: usize,
    pub matvec_count: u64,
    pub residual_norm: f64,
    pub wall_time_s: f64,
}

/// One row per system: the solve's matvec count, final residual norm, and
/// wall time.
pub fn write_history_csv(path: &Path, rep: &SequenceReport) -> Result<()> {
    let mut out = String::from("system_index,matvec_count,residual_norm,wall_time_s\n");
    for sys in &rep.systems {
        out.push_str(&format!(
            "{},{},{},{}\n",
            sys.system_index,
            sys.total_matvecs(),
            f(sys.report.final_residual_norm),
            f(sys.report.wall_time_s),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    const WHAT: &str = "history csv";
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 4 {
            return Err(Error::parse(WHAT, path, ln + 1, "expected 4 columns"));
        }
        rows.push(HistoryRow {
            system_index: p[0]
                .parse()
                .map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
            matvec_count: p[1]
                .parse()
                .map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
            residual_norm: p[2]
                .parse()
                .map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
            wall_time_s: p[3]
                .parse()
                .map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub systems: usize,
    pub converged: usize,
    pub total_matvecs: u64,
    pub total_wall_time_s: f64,
    pub avg_matvecs_per_system: f64,
    pub avg_cycles_or_iterations: f64,
    pub time_per_cycle_or_iteration_s: f64,
    pub storage_nvectors: u64,
    /// Average matvecs over the recycled-BiCGStab systems only; equals the
    /// all-systems average for solvers without such a phase.
    pub avg_matvecs_recycled_phase: f64,
    pub instability_events: usize,
}

pub fn summarize(label: &str, rep: &SequenceReport) -> SummaryRow {
    let systems = rep.systems.len();
    let converged = rep.systems.iter().filter(|s| s.report.converged()).count();
    let total_matvecs = rep.total_matvecs();
    let total_cycles: u64 = rep.systems.iter().map(|s| s.report.cycles_or_iterations).sum();
    let solve_time: f64 = rep.systems.iter().map(|s| s.report.wall_time_s).sum();
    let rbicg: Vec<&SystemRecord> = rep
        .systems
        .iter()
        .filter(|s| s.solver == SolverTag::Rbicgstab)
        .collect();
    let avg_all = if systems > 0 {
        total_matvecs as f64 / systems as f64
    } else {
        0.0
    };
    let avg_recycled = if rbicg.is_empty() {
        avg_all
    } else {
        rbicg.iter().map(|s| s.total_matvecs()).sum::<u64>() as f64 / rbicg.len() as f64
    };
    SummaryRow {
        solver: label.to_string(),
        systems,
        converged,
        total_matvecs,
        total_wall_time_s: rep.total_wall_time_s,
        avg_matvecs_per_system: avg_all,
        avg_cycles_or_iterations: if systems > 0 {
            total_cycles as f64 / systems as f64
        } else {
            0.0
        },
        time_per_cycle_or_iteration_s: if total_cycles > 0 {
            solve_time / total_cycles as f64
        } else {
            0.0
        },
        storage_nvectors: rep.systems.iter().map(|s| s.report.storage_nvectors).max().unwrap_or(0),
        avg_matvecs_recycled_phase: avg_recycled,
        instability_events: rep.events.len(),
    }
}

pub fn write_summary_csv(path: &Path, runs: &[(String, SequenceReport)]) -> Result<()> {
    let mut out = String::from(
        "solver,systems,converged,total_matvecs,total_wall_time_s,avg_matvecs_per_system,\
         avg_cycles_or_iterations,time_per_cycle_or_iteration_s,storage_nvectors,\
         avg_matvecs_recycled_phase,instability_events\n",
    );
    for (label, rep) in runs {
        let s = summarize(label, rep);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            s.solver,
            s.systems,
            s.converged,
            s.total_matvecs,
            f(s.total_wall_time_s),
            f(s.avg_matvecs_per_system),
            f(s.avg_cycles_or_iterations),
            f(s.time_per_cycle_or_iteration_s),
            s.storage_nvectors,
            f(s.avg_matvecs_recycled_phase),
            s.instability_events,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    const WHAT: &str = "summary csv";
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 11 {
            return Err(Error::parse(WHAT, path, ln + 1, "expected 11 columns"));
        }
        let err = |e: String| Error::parse(WHAT, path, ln + 1, e);
        rows.push(SummaryRow {
            solver: p[0].to_string(),
            systems: p[1].parse().map_err(|e| err(format!("{e}")))?,
            converged: p[2].parse().map_err(|e| err(format!("{e}")))?,
            total_matvecs: p[3].parse().map_err(|e| err(format!("{e}")))?,
            total_wall_time_s: p[4].parse().map_err(|e| err(format!("{e}")))?,
            avg_matvecs_per_system: p[5].parse().map_err(|e| err(format!("{e}")))?,
            avg_cycles_or_iterations: p[6].parse().map_err(|e| err(format!("{e}")))?,
            time_per_cycle_or_iteration_s: p[7].parse().map_err(|e| err(format!("{e}")))?,
            storage_nvectors: p[8].parse().map_err(|e| err(format!("{e}")))?,
            avg_matvecs_recycled_phase: p[9].parse().map_err(|e| err(format!("{e}")))?,
            instability_events: p[10].parse().map_err(|e| err(format!("{e}")))?,
        });
    }
    Ok(rows)
}

/// Per-system matvecs and initial residual norms (the trace plotted over
/// time steps).
pub fn export_trace_csv(path: &Path, rep: &SequenceReport) -> Result<()> {
    let mut out = String::from("system_index,solver,matvecs,r0_norm,status\n");
    for sys in &rep.systems {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            sys.system_index,
            sys.solver.name(),
            sys.total_matvecs(),
            f(sys.r0_norm),
            sys.report.status.name(),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Residual-norm curve of one system's solve against the matvec count.
pub fn export_residual_curve(path: &Path, rep: &SequenceReport, system_index: usize) -> Result<()> {
    let sys = rep
        .systems
        .iter()
        .find(|s| s.system_index == system_index)
        .ok_or_else(|| Error::NotFound(format!("no system with index {system_index} in report")))?;
    let mut out = String::from("matvec_count,residual_norm\n");
    for (mv, norm) in &sys.report.residual_history {
        out.push_str(&format!("{},{}\n", mv, f(*norm)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read back a residual curve (matvec_count, residual_norm) pairs.
pub fn read_residual_curve(path: &Path) -> Result<Vec<(u64, f64)>> {
    const WHAT: &str = "residual curve csv";
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(WHAT, path, ln + 1, "expected 2 columns"))?;
        rows.push((
            a.parse().map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
            b.parse().map_err(|e| Error::parse(WHAT, path, ln + 1, format!("{e}")))?,
        ));
    }
    Ok(rows)
}

/// Run a single solver (the first configured) over the run's sequence and
/// write its reports; the `solve` subcommand.
pub fn run_single(cfg: &RunConfig) -> Result<ComparisonOutcome> {
    let mut single = cfg.clone();
    single.solvers.truncate(1);
    run_comparison(&single)
}

/// One matvec on a matrix loaded from a sequence dir or matrix file; used by
/// the dump tooling in the CLI.
pub fn rhs_norms(seq: &SystemSequence) -> Vec<f64> {
    seq.rhs.iter().map(|b| norm2(b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::identity_stencil;

    fn kv(text: &str) -> KeyValues {
        KeyValues::parse_str(text, Path::new("test.cfg")).unwrap()
    }

    #[test]
    fn config_defaults_are_sensible() {
        let cfg = parse_run_config(&kv("")).unwrap();
        assert_eq!(cfg.solvers.len(), 4);
        assert_eq!(cfg.mode, ComparisonMode::Independent);
        assert_eq!(cfg.solver_cfg.tol, 1e-8);
        assert!(matches!(cfg.problem, ProblemSpec::ConvectionDiffusion { .. }));
    }

    #[test]
    fn config_parses_sections_and_overrides() {
        let text = "\
problem.kind = poisson
problem.nx = 8
problem.ny = 8
problem.bc = dirichlet
sequence.kind = perturbed_rhs
sequence.steps = 3
solvers = gmres,rgcrot
gmres.m = 12
rgcrot.m = 6
rgcrot.k = 9
precond.kind = ssor
precond.sweeps = 2
precond.relax = 1.2
solver.tol = 1e-7
solver.tol_mode = absolute
mode = shared_rhs
seed = 99
";
        let cfg = parse_run_config(&kv(text)).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.solvers.len(), 2);
        assert_eq!(cfg.solvers[0].label(), "gmres12");
        assert_eq!(cfg.solvers[1].label(), "rgcrot6x9");
        assert_eq!(cfg.precond.kind, PrecondKind::Ssor);
        assert_eq!(cfg.precond.sweeps, 2);
        assert_eq!(cfg.mode, ComparisonMode::SharedRhs);
        assert_eq!(cfg.solver_cfg.tol, 1e-7);
        assert_eq!(cfg.solver_cfg.tol_mode, TolMode::Absolute);
    }

    #[test]
    fn channel_runs_default_to_absolute_tolerance() {
        let cfg = parse_run_config(&kv("sequence.kind = fractional_step")).unwrap();
        assert_eq!(cfg.solver_cfg.tol_mode, TolMode::Absolute);
        assert_eq!(cfg.solver_cfg.tol, 1e-6);
        let cfg2 = parse_run_config(&kv(
            "sequence.kind = fractional_step\nsequence.geometry = porous",
        ))
        .unwrap();
        assert_eq!(cfg2.solver_cfg.tol_mode, TolMode::Relative);
        assert_eq!(cfg2.solver_cfg.tol, 1e-10);
    }

    #[test]
    fn single_identity_system_summary_is_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let a = identity_stencil(GridShape::two_d(4, 4).unwrap());
        let seq = perturbed_rhs_sequence(a, &[1.0; 16], 1, 0.0, 0.0, 0).unwrap();
        let text = format!("out = {}\nsolvers = bicgstab\n", dir.path().display());
        let mut cfg = parse_run_config(&kv(&text)).unwrap();
        cfg.precond = PreconditionerSpec::identity();
        let rep = run_over_fixed_sequence(&cfg.solvers[0], &seq, &cfg).unwrap();
        assert_eq!(rep.systems.len(), 1);
        assert!(rep.all_converged());
        let row = summarize("bicgstab", &rep);
        assert_eq!(row.systems, 1);
        assert_eq!(row.converged, 1);
        let its = rep.systems[0].report.cycles_or_iterations;
        assert!(rep.systems[0].report.matvecs == 2 * its || rep.systems[0].report.matvecs == 2 * its - 1);
    }

    #[test]
    fn shared_rhs_gives_identical_r0_across_solvers() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "problem.kind = poisson\nproblem.nx = 8\nproblem.ny = 8\n\
             sequence.steps = 3\nsolvers = bicgstab,bicgstab\nmode = shared_rhs\nout = {}\n",
            dir.path().display()
        );
        let cfg = parse_run_config(&kv(&text)).unwrap();
        let out = run_comparison(&cfg).unwrap();
        assert_eq!(out.runs.len(), 2);
        let (a, b) = (&out.runs[0].1, &out.runs[1].1);
        for (sa, sb) in a.systems.iter().zip(&b.systems) {
            assert_eq!(sa.r0_norm, sb.r0_norm);
        }
    }

    #[test]
    fn history_and_summary_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "problem.kind = convection_diffusion\nproblem.nx = 10\nproblem.ny = 10\n\
             sequence.steps = 2\nsolvers = gmres,hybrid\ngmres.m = 8\nhybrid.n_switch = 1\n\
             hybrid.m = 8\nhybrid.k = 10\nsolver.max_matvecs = 100000\nout = {}\n",
            dir.path().display()
        );
        let cfg = parse_run_config(&kv(&text)).unwrap();
        let out = run_comparison(&cfg).unwrap();
        for (label, rep) in &out.runs {
            let path = cfg.out_dir.join(format!("history_{label}.csv"));
            let rows = read_history_csv(&path).unwrap();
            assert_eq!(rows.len(), rep.systems.len());
            for (row, sys) in rows.iter().zip(&rep.systems) {
                assert_eq!(row.system_index, sys.system_index);
                assert_eq!(row.matvec_count, sys.total_matvecs());
                assert_eq!(row.residual_norm, sys.report.final_residual_norm);
                assert_eq!(row.wall_time_s, sys.report.wall_time_s);
            }
        }
        let rows = read_summary_csv(&cfg.out_dir.join("summary.csv")).unwrap();
        assert_eq!(rows.len(), out.runs.len());
        for (row, (label, rep)) in rows.iter().zip(&out.runs) {
            let expect = summarize(label, rep);
            assert_eq!(*row, expect);
        }
    }

    #[test]
    fn residual_curve_export_rejects_missing_system() {
        let dir = tempfile::tempdir().unwrap();
        let a = identity_stencil(GridShape::two_d(3, 3).unwrap());
        let seq = perturbed_rhs_sequence(a, &[1.0; 9], 2, 0.0, 0.0, 0).unwrap();
        let text = format!("solvers = gmres\ngmres.m = 4\nout = {}\n", dir.path().display());
        let mut cfg = parse_run_config(&kv(&text)).unwrap();
        cfg.precond = PreconditionerSpec::identity();
        let rep = run_over_fixed_sequence(&cfg.solvers[0], &seq, &cfg).unwrap();
        let path = dir.path().join("curve.csv");
        assert!(matches!(
            export_residual_curve(&path, &rep, 99),
            Err(Error::NotFound(_))
        ));
        export_residual_curve(&path, &rep, 1).unwrap();
        let curve = read_residual_curve(&path).unwrap();
        assert_eq!(curve.len(), rep.systems[1].report.residual_history.len());
    }
}
