//! Recycling BiCGStab with a single fixed recycle space.
//!
//! BiCGStab run on the projected operator A_C = (I - C C^T) A: the initial
//! residual is orthogonalized against C and every operator application is
//! followed by the projection, so the iteration lives in the orthogonal
//! complement of range(C). The solution components removed by those
//! projections are accumulated in the k-vector xi and folded back through
//! U R^-1 once, after the loop, instead of updating x with U every
//! iteration. The space stays constant for the whole solve; convergence is
//! certified against the unprojected system by one final counted residual.
//! With an empty space the method is BiCGStab, iterate for iterate.

use std::time::Instant;

use crate::bicgstab::{shadow_vector, BREAKDOWN_RTOL};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::operator::LinearOp;
use crate::recycle::RecycleSpace;
use crate::report::{InvariantDiagnostics, ResidualKind, SolveReport, SolveStatus};

/// Solve A x = b on the given (right-preconditioned) operator, iterating
/// orthogonally to the recycle space. The iterate lives in the operator's
/// variable space, as for [`crate::bicgstab::bicgstab`].
pub fn rbicgstab(
    op: &dyn LinearOp,
    b: &[f64],
    x_hat: &[f64],
    space: &RecycleSpace,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = op.n();
    if b.len() != n || x_hat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if b.len() != n { b.len() } else { x_hat.len() },
        });
    }
    if !space.is_empty() && space.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: space.n(),
        });
    }
    let start = Instant::now();
    let counter = op.counter().clone();
    let c0 = counter.count();
    let used = |c: &crate::operator::MatvecCounter| c.count() - c0;

    let k = space.k();
    let b_norm = norm2(b);
    let threshold = cfg.threshold(b_norm);

    let r_hat = if x_hat.iter().all(|&v| v == 0.0) {
        b.to_vec()
    } else {
        op.residual(x_hat, b)
    };
    let (_, mut r, mut xi) = space.project_initial(x_hat, &r_hat);
    let mut x = x_hat.to_vec();
    let r0_norm = norm2(&r);
    let mut r_norm = r0_norm;

    let r_shadow = shadow_vector(cfg.shadow, &r);
    let shadow_norm = norm2(&r_shadow);

    // Workspace: the six BiCGStab vectors, the operator's two buffers, and
    // the space's U and C blocks.
    let storage_nvectors = 8 + 2 * k as u64;

    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut history = vec![(used(&counter), r_norm)];
    let mut cycle_marks = Vec::new();
    let mut iterations = 0u64;
    let mut rho_old = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut status = SolveStatus::MaxIterations;
    let mut diverged = false;
    let mut diagnostics = cfg.record_invariants.then(InvariantDiagnostics::default);

    while r_norm > threshold && used(&counter) < cfg.max_matvecs {
        let rho = dot(&r_shadow, &r);
        if rho.abs() <= BREAKDOWN_RTOL * shadow_norm * r_norm {
            status = SolveStatus::Breakdown;
            break;
        }
        if iterations == 0 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        op.apply_into(&p, &mut v);
        let eta1 = if k > 0 {
            let eta = space.ct_dot(&v);
            space.subtract_c(&eta, &mut v);
            eta
        } else {
            Vec::new()
        };
        let rtv = dot(&r_shadow, &v);
        if rtv.abs() <= BREAKDOWN_RTOL * shadow_norm * norm2(&v) {
            status = SolveStatus::Breakdown;
            break;
        }
        alpha = rho / rtv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        iterations += 1;
        let s_norm = norm2(&s);
        if s_norm <= threshold {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            r.copy_from_slice(&s);
            r_norm = s_norm;
            for (xl, el) in xi.iter_mut().zip(&eta1) {
                *xl += alpha * el;
            }
            history.push((used(&counter), r_norm));
            cycle_marks.push(history.len() - 1);
            status = SolveStatus::Converged;
            break;
        }
        op.apply_into(&s, &mut t);
        let eta2 = if k > 0 {
            let eta = space.ct_dot(&t);
            space.subtract_c(&eta, &mut t);
            eta
        } else {
            Vec::new()
        };
        let tt = dot(&t, &t);
        let ts = dot(&t, &s);
        if tt == 0.0 || ts.abs() <= BREAKDOWN_RTOL * tt.sqrt() * s_norm {
            status = SolveStatus::Breakdown;
            break;
        }
        omega = ts / tt;
        for ((xl, e1), e2) in xi.iter_mut().zip(&eta1).zip(&eta2) {
            *xl += alpha * e1 + omega * e2;
        }
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
        }
        for i in 0..n {
            r[i] = s[i] - omega * t[i];
        }
        rho_old = rho;
        r_norm = norm2(&r);
        history.push((used(&counter), r_norm));
        cycle_marks.push(history.len() - 1);

        if let Some(diag) = diagnostics.as_mut() {
            if k > 0 && r0_norm > 0.0 {
                let leak = norm2(&space.ct_dot(&r)) / r0_norm;
                diag.residual_c_orthogonality = diag.residual_c_orthogonality.max(leak);
            }
        }
        if let Some(factor) = cfg.divergence_factor {
            if r_norm > factor * r0_norm {
                status = SolveStatus::Breakdown;
                diverged = true;
                break;
            }
        }
        if r_norm <= threshold {
            status = SolveStatus::Converged;
        }
    }
    if r_norm <= threshold {
        status = SolveStatus::Converged;
    }

    let mut final_residual_norm = r_norm;
    let mut drift = false;
    if k > 0 {
        // fold the accumulated U-updates into the solution once
        let upd = space.u_rinv(&xi);
        for (xl, ul) in x.iter_mut().zip(&upd) {
            *xl -= ul;
        }
        // certify against the unprojected system (one counted matvec)
        let true_r = op.residual(&x, b);
        final_residual_norm = norm2(&true_r);
        history.push((used(&counter), final_residual_norm));
        if status == SolveStatus::Converged && final_residual_norm > threshold {
            status = SolveStatus::MaxIterations;
            drift = true;
        }
    }

    let report = SolveReport {
        status,
        matvecs: used(&counter),
        cycles_or_iterations: iterations,
        residual_history: history,
        cycle_marks,
        wall_time_s: start.elapsed().as_secs_f64(),
        final_residual_norm,
        residual_kind: ResidualKind::TrueResidual,
        storage_nvectors,
        drift,
        diverged,
        diagnostics,
    };
    Ok((x, report))
}
