//! C ABI for the kryrec solvers.
//!
//! Handles are opaque pointers created and freed by this library; every
//! fallible call returns a [`KryrecStatus`] code and leaves a detail string
//! readable through [`kryrec_last_error_message`]. Vectors cross the
//! boundary as caller-owned `double` buffers whose length must equal the
//! matrix dimension. The shipped header lives at `include/kryrec.h`.
//!
//! Threading: a handle may be used from one thread at a time; distinct
//! handles are independent. The last-error message is thread-local.

// pointer contracts are documented once, in include/kryrec.h
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use libc::c_char;

use kryrec::config::{SolverConfig, TolMode};
use kryrec::gmres::gmres_m;
use kryrec::operator::PreconditionedOp;
use kryrec::precond::{PrecondKind, PreconditionerSpec, Side};
use kryrec::problems::{
    make_convection_diffusion, make_poisson, make_porous_mask, PoissonBc,
};
use kryrec::rbicgstab::rbicgstab;
use kryrec::recycle::RecycleSpace;
use kryrec::report::{SolveReport, SolveStatus};
use kryrec::rgcrot::{rgcrot, GcrotParams};
use kryrec::stencil::StencilMatrix;
use kryrec::GridShape;

/// Call outcome codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KryrecStatus {
    KryrecOk = 0,
    KryrecErrNullPointer = 1,
    KryrecErrInvalidArgument = 2,
    KryrecErrDimensionMismatch = 3,
    KryrecErrSingularPreconditioner = 4,
    KryrecErrGenerationFailed = 5,
    KryrecErrIo = 6,
    KryrecErrUtf8 = 7,
    KryrecErrPanic = 8,
}

/// Solver termination states mirrored into the C ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KryrecSolveStatus {
    KryrecConverged = 0,
    KryrecMaxIterations = 1,
    KryrecBreakdown = 2,
    KryrecStagnation = 3,
}

/// Solve options; initialize with [`kryrec_options_init`] and override
/// fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KryrecOptions {
    /// Convergence tolerance.
    pub tol: f64,
    /// Nonzero: `tol` is absolute; zero: relative to the right-hand side.
    pub tol_is_absolute: i32,
    /// Iteration cap in matrix-vector products.
    pub max_matvecs: u64,
    /// Restart/cycle length for the GMRES family.
    pub restart_m: u32,
    /// 0 = identity, 1 = Jacobi, 2 = SSOR.
    pub precond_kind: u32,
    pub precond_sweeps: u32,
    pub precond_relax: f64,
}

impl KryrecOptions {
    fn defaults() -> Self {
        KryrecOptions {
            tol: 1e-8,
            tol_is_absolute: 0,
            max_matvecs: 2000,
            restart_m: 30,
            precond_kind: 1,
            precond_sweeps: 5,
            precond_relax: 0.8,
        }
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            tol_mode: if self.tol_is_absolute != 0 {
                TolMode::Absolute
            } else {
                TolMode::Relative
            },
            max_matvecs: self.max_matvecs,
            m: self.restart_m as usize,
            ..SolverConfig::default()
        }
    }

    fn precond_spec(&self, side: Side) -> Result<PreconditionerSpec, KryrecStatus> {
        let kind = match self.precond_kind {
            0 => PrecondKind::Identity,
            1 => PrecondKind::Jacobi,
            2 => PrecondKind::Ssor,
            _ => return Err(fail(
                KryrecStatus::KryrecErrInvalidArgument,
                "precond_kind must be 0 (identity), 1 (jacobi), or 2 (ssor)",
            )),
        };
        Ok(PreconditionerSpec {
            kind,
            sweeps: self.precond_sweeps as usize,
            relax: self.precond_relax,
            side,
        })
    }
}

/// Opaque matrix handle.
pub struct KryrecMatrix {
    inner: Arc<StencilMatrix>,
}

/// Opaque recycle-space handle.
pub struct KryrecSpace {
    inner: RecycleSpace,
}

/// Opaque solve-report handle.
pub struct KryrecReport {
    inner: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(code: KryrecStatus, msg: impl std::fmt::Display) -> KryrecStatus {
    let text = CString::new(msg.to_string()).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
    code
}

fn fail_from(err: kryrec::Error) -> KryrecStatus {
    use kryrec::Error as E;
    let code = match &err {
        E::DimensionMismatch { .. } => KryrecStatus::KryrecErrDimensionMismatch,
        E::SingularPreconditioner { .. } => KryrecStatus::KryrecErrSingularPreconditioner,
        E::Generation(_) | E::CflViolation { .. } => KryrecStatus::KryrecErrGenerationFailed,
        E::Io(_) | E::Parse { .. } | E::NotFound(_) => KryrecStatus::KryrecErrIo,
        _ => KryrecStatus::KryrecErrInvalidArgument,
    };
    fail(code, err)
}

/// Detail message for the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kryrec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn kryrec_status_name(status: KryrecStatus) -> *const c_char {
    let name: &'static CStr = match status {
        KryrecStatus::KryrecOk => c"ok",
        KryrecStatus::KryrecErrNullPointer => c"null pointer",
        KryrecStatus::KryrecErrInvalidArgument => c"invalid argument",
        KryrecStatus::KryrecErrDimensionMismatch => c"dimension mismatch",
        KryrecStatus::KryrecErrSingularPreconditioner => c"singular preconditioner",
        KryrecStatus::KryrecErrGenerationFailed => c"generation failed",
        KryrecStatus::KryrecErrIo => c"io error",
        KryrecStatus::KryrecErrUtf8 => c"invalid utf-8",
        KryrecStatus::KryrecErrPanic => c"internal panic",
    };
    name.as_ptr()
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_options_init(opts: *mut KryrecOptions) {
    if let Some(opts) = opts.as_mut() {
        *opts = KryrecOptions::defaults();
    }
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn guarded<F: FnOnce() -> KryrecStatus>(f: F) -> KryrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(KryrecStatus::KryrecErrPanic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, KryrecStatus> {
    if ptr.is_null() {
        return Err(fail(KryrecStatus::KryrecErrNullPointer, "null string"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(KryrecStatus::KryrecErrUtf8, e))
}

unsafe fn out_handle<T>(slot: *mut *mut T, value: T) -> KryrecStatus {
    if slot.is_null() {
        return fail(KryrecStatus::KryrecErrNullPointer, "null output handle");
    }
    *slot = Box::into_raw(Box::new(value));
    KryrecStatus::KryrecOk
}

unsafe fn shape_of(nx: u32, ny: u32, nz: u32) -> Result<GridShape, KryrecStatus> {
    GridShape::new(nx as usize, ny as usize, nz as usize).map_err(fail_from)
}

unsafe fn slice_arg<'a>(
    ptr: *const f64,
    len: u64,
    expected: usize,
) -> Result<&'a [f64], KryrecStatus> {
    if ptr.is_null() {
        return Err(fail(KryrecStatus::KryrecErrNullPointer, "null vector"));
    }
    if len as usize != expected {
        return Err(fail(
            KryrecStatus::KryrecErrDimensionMismatch,
            format!("vector length {len}, matrix dimension {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts(ptr, expected))
}

// ---------------------------------------------------------------------------
// matrices
// ---------------------------------------------------------------------------

/// Standard Laplacian; `periodic_x` nonzero builds the channel-style matrix
/// (periodic in x, walls elsewhere, one anchored cell).
#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_poisson(
    nx: u32,
    ny: u32,
    nz: u32,
    periodic_x: i32,
    out: *mut *mut KryrecMatrix,
) -> KryrecStatus {
    guarded(|| {
        let shape = match shape_of(nx, ny, nz) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if periodic_x != 0 && shape.nx < 3 {
            return fail(
                KryrecStatus::KryrecErrInvalidArgument,
                "periodic_x needs nx >= 3",
            );
        }
        let bc = if periodic_x != 0 { PoissonBc::PeriodicX } else { PoissonBc::Dirichlet };
        let m = make_poisson(shape, bc);
        out_handle(out, KryrecMatrix { inner: Arc::new(m) })
    })
}

/// Laplacian plus first-order upwind convection of strength `peclet` along
/// the (wx, wy, wz) direction.
#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_convection_diffusion(
    nx: u32,
    ny: u32,
    nz: u32,
    peclet: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    out: *mut *mut KryrecMatrix,
) -> KryrecStatus {
    guarded(|| {
        let shape = match shape_of(nx, ny, nz) {
            Ok(s) => s,
            Err(c) => return c,
        };
        match make_convection_diffusion(shape, peclet, [wx, wy, wz]) {
            Ok(m) => out_handle(out, KryrecMatrix { inner: Arc::new(m) }),
            Err(e) => fail_from(e),
        }
    })
}

/// Laplacian with randomly masked solid cells (identity rows), reproducible
/// from the seed.
#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_porous(
    nx: u32,
    ny: u32,
    nz: u32,
    porosity: f64,
    seed: u64,
    out: *mut *mut KryrecMatrix,
) -> KryrecStatus {
    guarded(|| {
        let shape = match shape_of(nx, ny, nz) {
            Ok(s) => s,
            Err(c) => return c,
        };
        match make_porous_mask(shape, porosity, seed) {
            Ok(m) => out_handle(out, KryrecMatrix { inner: Arc::new(m) }),
            Err(e) => fail_from(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_load(
    path: *const c_char,
    out: *mut *mut KryrecMatrix,
) -> KryrecStatus {
    guarded(|| {
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(c) => return c,
        };
        match kryrec::io::read_matrix(std::path::Path::new(path)) {
            Ok(m) => out_handle(out, KryrecMatrix { inner: Arc::new(m) }),
            Err(e) => fail_from(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_save(
    matrix: *const KryrecMatrix,
    path: *const c_char,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(c) => return c,
        };
        match kryrec::io::write_matrix(std::path::Path::new(path), &m.inner) {
            Ok(()) => KryrecStatus::KryrecOk,
            Err(e) => fail_from(e),
        }
    })
}

/// Number of unknowns; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_n(matrix: *const KryrecMatrix) -> u64 {
    matrix.as_ref().map(|m| m.inner.n() as u64).unwrap_or(0)
}

/// y = A x (uncounted; for wiring checks on the caller side).
#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_matvec(
    matrix: *const KryrecMatrix,
    x: *const f64,
    y: *mut f64,
    n: u64,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let x = match slice_arg(x, n, m.inner.n()) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if y.is_null() {
            return fail(KryrecStatus::KryrecErrNullPointer, "null output vector");
        }
        let y = std::slice::from_raw_parts_mut(y, m.inner.n());
        m.inner.matvec_into(x, y);
        KryrecStatus::KryrecOk
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_matrix_free(matrix: *mut KryrecMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

// ---------------------------------------------------------------------------
// recycle spaces
// ---------------------------------------------------------------------------

/// Empty recycle space for dimension-`n` systems, holding at most `k_max`
/// directions.
#[no_mangle]
pub unsafe extern "C" fn kryrec_space_new(
    n: u64,
    k_max: u64,
    out: *mut *mut KryrecSpace,
) -> KryrecStatus {
    guarded(|| {
        out_handle(
            out,
            KryrecSpace {
                inner: RecycleSpace::empty(n as usize, k_max as usize),
            },
        )
    })
}

/// Current dimension of the space; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn kryrec_space_dim(space: *const KryrecSpace) -> u64 {
    space.as_ref().map(|s| s.inner.k() as u64).unwrap_or(0)
}

/// Re-factor the space against the right-preconditioned operator of this
/// matrix (the operator rBiCGStab iterates). Required after rGCROT built or
/// evolved the space, and whenever the matrix or preconditioner changed.
/// Costs k matrix-vector products.
#[no_mangle]
pub unsafe extern "C" fn kryrec_space_refresh(
    space: *mut KryrecSpace,
    matrix: *const KryrecMatrix,
    opts: *const KryrecOptions,
) -> KryrecStatus {
    guarded(|| {
        let Some(space) = space.as_mut() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null space");
        };
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let Some(opts) = opts.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null options");
        };
        let spec = match opts.precond_spec(Side::Right) {
            Ok(s) => s,
            Err(c) => return c,
        };
        let op = match PreconditionedOp::new(m.inner.clone(), &spec) {
            Ok(op) => op,
            Err(e) => return fail_from(e),
        };
        match space.inner.refresh_qr(&op) {
            Ok(_dropped) => KryrecStatus::KryrecOk,
            Err(e) => fail_from(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_space_save(
    space: *const KryrecSpace,
    path: *const c_char,
) -> KryrecStatus {
    guarded(|| {
        let Some(s) = space.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null space");
        };
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(c) => return c,
        };
        match kryrec::io::write_recycle_space(std::path::Path::new(path), &s.inner) {
            Ok(()) => KryrecStatus::KryrecOk,
            Err(e) => fail_from(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_space_load(
    path: *const c_char,
    out: *mut *mut KryrecSpace,
) -> KryrecStatus {
    guarded(|| {
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(c) => return c,
        };
        match kryrec::io::read_recycle_space(std::path::Path::new(path)) {
            Ok(inner) => out_handle(out, KryrecSpace { inner }),
            Err(e) => fail_from(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_space_free(space: *mut KryrecSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

// ---------------------------------------------------------------------------
// solves
// ---------------------------------------------------------------------------

unsafe fn report_out(slot: *mut *mut KryrecReport, rep: SolveReport) {
    if !slot.is_null() {
        *slot = Box::into_raw(Box::new(KryrecReport { inner: rep }));
    }
}

/// Restarted GMRES with left preconditioning; writes the solution into
/// `x_out` (length n). `report_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn kryrec_solve_gmres(
    matrix: *const KryrecMatrix,
    b: *const f64,
    n: u64,
    opts: *const KryrecOptions,
    x_out: *mut f64,
    report: *mut *mut KryrecReport,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let Some(opts) = opts.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null options");
        };
        let b = match slice_arg(b, n, m.inner.n()) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if x_out.is_null() {
            return fail(KryrecStatus::KryrecErrNullPointer, "null solution buffer");
        }
        let spec = match opts.precond_spec(Side::Left) {
            Ok(s) => s,
            Err(c) => return c,
        };
        let op = match PreconditionedOp::new(m.inner.clone(), &spec) {
            Ok(op) => op,
            Err(e) => return fail_from(e),
        };
        let bh = op.precondition_rhs(b);
        let x0 = vec![0.0; b.len()];
        match gmres_m(&op, &bh, &x0, &opts.solver_config()) {
            Ok((x, rep)) => {
                std::slice::from_raw_parts_mut(x_out, x.len()).copy_from_slice(&x);
                report_out(report, rep);
                KryrecStatus::KryrecOk
            }
            Err(e) => fail_from(e),
        }
    })
}

/// BiCGStab with right preconditioning; writes the solution into `x_out`.
#[no_mangle]
pub unsafe extern "C" fn kryrec_solve_bicgstab(
    matrix: *const KryrecMatrix,
    b: *const f64,
    n: u64,
    opts: *const KryrecOptions,
    x_out: *mut f64,
    report: *mut *mut KryrecReport,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let Some(opts) = opts.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null options");
        };
        let b = match slice_arg(b, n, m.inner.n()) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if x_out.is_null() {
            return fail(KryrecStatus::KryrecErrNullPointer, "null solution buffer");
        }
        let spec = match opts.precond_spec(Side::Right) {
            Ok(s) => s,
            Err(c) => return c,
        };
        let op = match PreconditionedOp::new(m.inner.clone(), &spec) {
            Ok(op) => op,
            Err(e) => return fail_from(e),
        };
        let x0 = vec![0.0; b.len()];
        match kryrec::bicgstab::bicgstab(&op, b, &x0, &opts.solver_config()) {
            Ok((y, rep)) => {
                let x = op.unprecondition_solution(&y);
                std::slice::from_raw_parts_mut(x_out, x.len()).copy_from_slice(&x);
                report_out(report, rep);
                KryrecStatus::KryrecOk
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Recycling GCROT with left preconditioning. The space evolves in place
/// and can be carried to the next system of a sequence; refresh it with
/// [`kryrec_space_refresh`] before handing it to rBiCGStab.
#[no_mangle]
pub unsafe extern "C" fn kryrec_solve_rgcrot(
    matrix: *const KryrecMatrix,
    b: *const f64,
    n: u64,
    opts: *const KryrecOptions,
    space: *mut KryrecSpace,
    x_out: *mut f64,
    report: *mut *mut KryrecReport,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let Some(opts) = opts.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null options");
        };
        let Some(space) = space.as_mut() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null space");
        };
        let b = match slice_arg(b, n, m.inner.n()) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if x_out.is_null() {
            return fail(KryrecStatus::KryrecErrNullPointer, "null solution buffer");
        }
        let spec = match opts.precond_spec(Side::Left) {
            Ok(s) => s,
            Err(c) => return c,
        };
        let op = match PreconditionedOp::new(m.inner.clone(), &spec) {
            Ok(op) => op,
            Err(e) => return fail_from(e),
        };
        let params = GcrotParams::new(opts.restart_m as usize, space.inner.k_max());
        let bh = op.precondition_rhs(b);
        let x0 = vec![0.0; b.len()];
        match rgcrot(&op, &bh, &x0, &space.inner, &params, &opts.solver_config()) {
            Ok((x, evolved, rep)) => {
                space.inner = evolved;
                std::slice::from_raw_parts_mut(x_out, x.len()).copy_from_slice(&x);
                report_out(report, rep);
                KryrecStatus::KryrecOk
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Recycling BiCGStab with right preconditioning and a frozen space. The
/// space must have been refreshed against this matrix and preconditioner
/// (see [`kryrec_space_refresh`]).
#[no_mangle]
pub unsafe extern "C" fn kryrec_solve_rbicgstab(
    matrix: *const KryrecMatrix,
    b: *const f64,
    n: u64,
    opts: *const KryrecOptions,
    space: *const KryrecSpace,
    x_out: *mut f64,
    report: *mut *mut KryrecReport,
) -> KryrecStatus {
    guarded(|| {
        let Some(m) = matrix.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null matrix");
        };
        let Some(opts) = opts.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null options");
        };
        let Some(space) = space.as_ref() else {
            return fail(KryrecStatus::KryrecErrNullPointer, "null space");
        };
        let b = match slice_arg(b, n, m.inner.n()) {
            Ok(s) => s,
            Err(c) => return c,
        };
        if x_out.is_null() {
            return fail(KryrecStatus::KryrecErrNullPointer, "null solution buffer");
        }
        let spec = match opts.precond_spec(Side::Right) {
            Ok(s) => s,
            Err(c) => return c,
        };
        let op = match PreconditionedOp::new(m.inner.clone(), &spec) {
            Ok(op) => op,
            Err(e) => return fail_from(e),
        };
        let x0 = vec![0.0; b.len()];
        match rbicgstab(&op, b, &x0, &space.inner, &opts.solver_config()) {
            Ok((y, rep)) => {
                let x = op.unprecondition_solution(&y);
                std::slice::from_raw_parts_mut(x_out, x.len()).copy_from_slice(&x);
                report_out(report, rep);
                KryrecStatus::KryrecOk
            }
            Err(e) => fail_from(e),
        }
    })
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn kryrec_report_status(report: *const KryrecReport) -> KryrecSolveStatus {
    match report.as_ref().map(|r| r.inner.status) {
        Some(SolveStatus::Converged) => KryrecSolveStatus::KryrecConverged,
        Some(SolveStatus::MaxIterations) | None => KryrecSolveStatus::KryrecMaxIterations,
        Some(SolveStatus::Breakdown) => KryrecSolveStatus::KryrecBreakdown,
        Some(SolveStatus::Stagnation) => KryrecSolveStatus::KryrecStagnation,
    }
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_report_matvecs(report: *const KryrecReport) -> u64 {
    report.as_ref().map(|r| r.inner.matvecs).unwrap_or(0)
}

/// GMRES-family cycles or BiCGStab-family iterations.
#[no_mangle]
pub unsafe extern "C" fn kryrec_report_cycles(report: *const KryrecReport) -> u64 {
    report.as_ref().map(|r| r.inner.cycles_or_iterations).unwrap_or(0)
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_report_final_residual(report: *const KryrecReport) -> f64 {
    report.as_ref().map(|r| r.inner.final_residual_norm).unwrap_or(f64::NAN)
}

/// Solver workspace in n-vector units.
#[no_mangle]
pub unsafe extern "C" fn kryrec_report_storage_nvectors(report: *const KryrecReport) -> u64 {
    report.as_ref().map(|r| r.inner.storage_nvectors).unwrap_or(0)
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_report_history_len(report: *const KryrecReport) -> u64 {
    report.as_ref().map(|r| r.inner.residual_history.len() as u64).unwrap_or(0)
}

/// Fetch history entry `index` as (matvec count, residual norm).
#[no_mangle]
pub unsafe extern "C" fn kryrec_report_history_entry(
    report: *const KryrecReport,
    index: u64,
    matvec_out: *mut u64,
    residual_out: *mut f64,
) -> KryrecStatus {
    let Some(r) = report.as_ref() else {
        return fail(KryrecStatus::KryrecErrNullPointer, "null report");
    };
    let Some(&(mv, norm)) = r.inner.residual_history.get(index as usize) else {
        return fail(
            KryrecStatus::KryrecErrInvalidArgument,
            format!("history index {index} out of range"),
        );
    };
    if matvec_out.is_null() || residual_out.is_null() {
        return fail(KryrecStatus::KryrecErrNullPointer, "null output");
    }
    *matvec_out = mv;
    *residual_out = norm;
    KryrecStatus::KryrecOk
}

#[no_mangle]
pub unsafe extern "C" fn kryrec_report_free(report: *mut KryrecReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests;
