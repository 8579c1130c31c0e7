//! BiCGStab.
//!
//! Two matrix-vector products per iteration, except a converged early exit
//! after the first product. Convergence is checked once per loop body.
//! Breakdown (rho, the shadow product, or omega vanishing) terminates the
//! solve gracefully with `SolveStatus::Breakdown`.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{ShadowChoice, SolverConfig};
use crate::error::Result;
use crate::linalg::{dot, norm2};
use crate::operator::LinearOp;
use crate::report::{ResidualKind, SolveReport, SolveStatus};

/// Relative size below which a bi-Lanczos inner product counts as zero.
pub(crate) const BREAKDOWN_RTOL: f64 = 1e-14;

pub(crate) fn shadow_vector(choice: ShadowChoice, r0: &[f64]) -> Vec<f64> {
    match choice {
        ShadowChoice::InitialResidual => r0.to_vec(),
        ShadowChoice::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            r0.iter().map(|_| rng.gen::<f64>() - 0.5).collect()
        }
    }
}

/// Solve A x = b with BiCGStab on the given (right-preconditioned) operator.
/// The iterate lives in the operator's variable space; with right
/// preconditioning the caller maps it back through M^-1 afterwards.
pub fn bicgstab(
    op: &dyn LinearOp,
    b: &[f64],
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = op.n();
    if b.len() != n || x0.len() != n {
        return Err(crate::error::Error::DimensionMismatch {
            expected: n,
            got: if b.len() != n { b.len() } else { x0.len() },
        });
    }
    let start = Instant::now();
    let counter = op.counter().clone();
    let c0 = counter.count();
    let used = |c: &crate::operator::MatvecCounter| c.count() - c0;

    let b_norm = norm2(b);
    let threshold = cfg.threshold(b_norm);

    let mut x = x0.to_vec();
    let mut r = if x0.iter().all(|&v| v == 0.0) {
        b.to_vec()
    } else {
        op.residual(x0, b)
    };
    let r0_norm = norm2(&r);
    let mut r_norm = r0_norm;

    let r_shadow = shadow_vector(cfg.shadow, &r);
    let shadow_norm = norm2(&r_shadow);

    // Workspace: r, r_shadow, p, v, s, t plus the operator's two buffers.
    let storage_nvectors = 8;

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
            history.push((used(&counter), r_norm));
            cycle_marks.push(history.len() - 1);
            status = SolveStatus::Converged;
            break;
        }
        op.apply_into(&s, &mut t);
        let tt = dot(&t, &t);
        let ts = dot(&t, &s);
        if tt == 0.0 || ts.abs() <= BREAKDOWN_RTOL * tt.sqrt() * s_norm {
            status = SolveStatus::Breakdown;
            break;
        }
        omega = ts / tt;
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

    let report = SolveReport {
        status,
        matvecs: used(&counter),
        cycles_or_iterations: iterations,
        residual_history: history,
        cycle_marks,
        wall_time_s: start.elapsed().as_secs_f64(),
        final_residual_norm: r_norm,
        residual_kind: ResidualKind::TrueResidual,
        storage_nvectors,
        drift: false,
        diverged,
        diagnostics: None,
    };
    Ok((x, report))
}
