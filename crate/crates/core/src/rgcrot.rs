//! Recycling GCROT.
//!
//! GMRES(m) augmented with a recycle space: each new Arnoldi vector is first
//! orthogonalized against C, giving the relation A V_m = C B + V_{m+1} H.
//! The least-squares problem then separates: y minimizes the V-component
//! exactly as in GMRES, and z = -B y annihilates the C-component. The
//! solution update folds both parts in (x += V y + U R^-1 B y). At the end
//! of every cycle the space may be extended with the inner directions that
//! carried the largest share of the cycle's update, truncated back when it
//! outgrows its cap, with the images of promoted directions taken from the
//! augmented relation instead of fresh matvecs. With an empty space and
//! updates disabled the method reduces to GMRES(m) step for step.

use std::time::Instant;

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::gmres::stagnated;
use crate::linalg::{axpy, back_substitute, dot, givens, norm2, scale, SmallMat};
use crate::operator::LinearOp;
use crate::recycle::RecycleSpace;
use crate::report::{InvariantDiagnostics, ResidualKind, SolveReport, SolveStatus};

const HAPPY_BREAKDOWN_RTOL: f64 = 1e-14;

/// Tuning of the recycle-space evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcrotParams {
    /// Inner (augmented Arnoldi) cycle length.
    pub m: usize,
    /// Cap on the recycle-space dimension; 0 disables recycling entirely.
    pub k_max: usize,
    /// Columns kept when truncating after the cap is exceeded.
    pub trunc_keep: usize,
    /// Leading inner vectors considered for promotion each cycle.
    pub select_pool: usize,
    /// Inner vectors promoted per cycle; 0 freezes the space.
    pub select_count: usize,
    /// Newest columns always kept by truncation.
    pub keep_latest: usize,
}

impl GcrotParams {
    pub fn new(m: usize, k_max: usize) -> Self {
        let select_pool = (m / 2).max(1);
        GcrotParams {
            m,
            k_max,
            trunc_keep: if k_max > 10 { k_max - 10 } else { k_max.saturating_sub(1) },
            select_pool,
            select_count: 2.min(select_pool),
            keep_latest: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("rgcrot m must be >= 1".into()));
        }
        if self.select_count > 0
            && (self.select_count > self.select_pool || self.select_pool > self.m)
        {
            return Err(Error::InvalidConfig(format!(
                "need select_count <= select_pool <= m, got {} <= {} <= {}",
                self.select_count, self.select_pool, self.m
            )));
        }
        if self.k_max > 0 && self.trunc_keep >= self.k_max {
            return Err(Error::InvalidConfig(format!(
                "trunc_keep must be < k_max, got {} >= {}",
                self.trunc_keep, self.k_max
            )));
        }
        if self.keep_latest > self.trunc_keep {
            return Err(Error::InvalidConfig(format!(
                "keep_latest must be <= trunc_keep, got {} > {}",
                self.keep_latest, self.trunc_keep
            )));
        }
        Ok(())
    }
}

/// One cycle's worth of inner data, handed to [`update_recycle`].
pub struct CycleData<'a> {
    /// Arnoldi basis V (steps+1 columns unless the cycle broke down early).
    pub v: &'a [Vec<f64>],
    /// Raw Hessenberg (m+1 x m), columns 0..steps populated.
    pub h: &'a SmallMat,
    /// Projection coefficients B = C^T A V (k x m).
    pub b: &'a SmallMat,
    /// Least-squares solution of the cycle.
    pub y: &'a [f64],
    /// Completed Arnoldi steps this cycle.
    pub steps: usize,
}

/// Promote the `select_count` highest-|y_j| directions of the candidate pool
/// into the space, then truncate to `trunc_keep` (dropping oldest first,
/// never the newest `keep_latest`) if the cap is exceeded. The image of a
/// promoted column v_j is assembled as C B e_j + V H e_j, so no matvecs are
/// spent. Returns the evolved space.
pub fn update_recycle(
    space: &RecycleSpace,
    cycle: &CycleData<'_>,
    params: &GcrotParams,
) -> RecycleSpace {
    let mut out = space.clone();
    out.set_k_max(params.k_max);
    if params.select_count == 0 || params.k_max == 0 {
        return out;
    }
    let pool = params.select_pool.min(cycle.steps);
    let mut ranked: Vec<usize> = (0..pool).collect();
    ranked.sort_by(|&a, &b| cycle.y[b].abs().total_cmp(&cycle.y[a].abs()));
    let y_scale = norm2(cycle.y);

    for &j in ranked.iter().take(params.select_count) {
        if cycle.y[j].abs() <= 1e-12 * y_scale {
            continue;
        }
        // A v_j = C (B e_j) + V (H e_j) from the augmented relation
        let n = cycle.v[0].len();
        let mut image = vec![0.0; n];
        for l in 0..space.k() {
            axpy(cycle.b.get(l, j), &space.c_cols()[l], &mut image);
        }
        let top = (j + 2).min(cycle.v.len());
        for l in 0..top {
            axpy(cycle.h.get(l, j), &cycle.v[l], &mut image);
        }
        out.append_direction(cycle.v[j].clone(), &image);
    }

    if out.k() > params.k_max {
        let k = out.k();
        let keep: Vec<usize> = (k - params.trunc_keep..k).collect();
        out.retain_columns(&keep);
    }
    out
}

/// Solve A x = b with rGCROT(m, k) on the given (preconditioned) operator,
/// starting from the supplied space. Returns the iterate, the evolved space
/// for the next system of the sequence, and the report.
pub fn rgcrot(
    op: &dyn LinearOp,
    b: &[f64],
    x_hat: &[f64],
    space: &RecycleSpace,
    params: &GcrotParams,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, RecycleSpace, SolveReport)> {
    cfg.validate()?;
    params.validate()?;
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

    let m = params.m;
    let b_norm = norm2(b);
    let threshold = cfg.threshold(b_norm);

    let r_hat = if x_hat.iter().all(|&v| v == 0.0) {
        b.to_vec()
    } else {
        op.residual(x_hat, b)
    };
    let mut space = space.clone();
    space.set_k_max(params.k_max);
    let (mut x, mut r, _) = space.project_initial(x_hat, &r_hat);
    let mut r_norm = norm2(&r);

    let mut history = vec![(used(&counter), r_norm)];
    let mut cycle_marks = Vec::new();
    let mut boundary_norms = vec![r_norm];
    let mut cycles = 0u64;
    let mut diagnostics = cfg.record_invariants.then(InvariantDiagnostics::default);
    let mut space_dirty = false;

    // Workspace: V (m+1), the r/w pair plus the operator's two buffers, and
    // the space's U and C blocks at their cap.
    let storage_nvectors = (m as u64 + 1) + 4 + 2 * params.k_max as u64;

    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut w = vec![0.0; n];
    let mut h = SmallMat::zeros(m + 1, m);
    let mut ht = SmallMat::zeros(m + 1, m);
    let mut g = vec![0.0; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut av_cols: Vec<Vec<f64>> = Vec::new();

    while r_norm > threshold && used(&counter) < cfg.max_matvecs {
        cycles += 1;
        // After a space update the residual can pick up a range(C)
        // component; fold it back into x so the new cycle starts orthogonal
        // to C again. Costs no matvecs.
        if space_dirty && !space.is_empty() {
            let xi = space.ct_dot(&r);
            space.subtract_c(&xi, &mut r);
            let upd = space.u_rinv(&xi);
            for (xi_, ui) in x.iter_mut().zip(&upd) {
                *xi_ += ui;
            }
            r_norm = norm2(&r);
            space_dirty = false;
            if r_norm <= threshold {
                history.push((used(&counter), r_norm));
                cycle_marks.push(history.len() - 1);
                boundary_norms.push(r_norm);
                break;
            }
        }

        v.clear();
        av_cols.clear();
        let k = space.k();
        let mut b_mat = SmallMat::zeros(k.max(1), m);
        let beta = r_norm;
        let mut v1 = r.clone();
        scale(1.0 / beta, &mut v1);
        v.push(v1);
        g.fill(0.0);
        g[0] = beta;

        let mut steps = 0;
        for j in 0..m {
            op.apply_into(&v[j], &mut w);
            if diagnostics.is_some() {
                av_cols.push(w.clone());
            }
            let pre_norm = norm2(&w);
            // orthogonalize against the recycle image basis first
            for l in 0..k {
                let blj = dot(&space.c_cols()[l], &w);
                b_mat.set(l, j, blj);
                axpy(-blj, &space.c_cols()[l], &mut w);
            }
            for l in 0..=j {
                let hlj = dot(&v[l], &w);
                h.set(l, j, hlj);
                axpy(-hlj, &v[l], &mut w);
            }
            if norm2(&w) < 0.7 * pre_norm {
                for l in 0..k {
                    let c = dot(&space.c_cols()[l], &w);
                    b_mat.set(l, j, b_mat.get(l, j) + c);
                    axpy(-c, &space.c_cols()[l], &mut w);
                }
                for l in 0..=j {
                    let c = dot(&v[l], &w);
                    h.set(l, j, h.get(l, j) + c);
                    axpy(-c, &v[l], &mut w);
                }
            }
            let hn = norm2(&w);
            h.set(j + 1, j, hn);

            for l in 0..=j + 1 {
                ht.set(l, j, h.get(l, j));
            }
            for l in 0..j {
                let t = cs[l] * ht.get(l, j) + sn[l] * ht.get(l + 1, j);
                ht.set(l + 1, j, -sn[l] * ht.get(l, j) + cs[l] * ht.get(l + 1, j));
                ht.set(l, j, t);
            }
            let (c, s) = givens(ht.get(j, j), ht.get(j + 1, j));
            cs[j] = c;
            sn[j] = s;
            ht.set(j, j, c * ht.get(j, j) + s * ht.get(j + 1, j));
            ht.set(j + 1, j, 0.0);
            g[j + 1] = -s * g[j];
            g[j] *= c;
            steps = j + 1;
            history.push((used(&counter), g[j + 1].abs()));

            if hn <= HAPPY_BREAKDOWN_RTOL * pre_norm {
                break;
            }
            scale(1.0 / hn, &mut w);
            v.push(w.clone());
        }

        let y = back_substitute(&ht, &g, steps);
        for (l, yl) in y.iter().enumerate() {
            axpy(*yl, &v[l], &mut x);
        }
        if k > 0 {
            // the C-component of the residual is annihilated by the
            // solution update x -= U R^-1 (B y)
            let mut by = vec![0.0; k];
            for j in 0..steps {
                for l in 0..k {
                    by[l] += b_mat.get(l, j) * y[j];
                }
            }
            let upd = space.u_rinv(&by);
            for (xi_, ui) in x.iter_mut().zip(&upd) {
                *xi_ -= ui;
            }
        }
        let r_old_norm = r_norm;
        r = op.residual(&x, b);
        r_norm = norm2(&r);
        history.push((used(&counter), r_norm));
        cycle_marks.push(history.len() - 1);
        boundary_norms.push(r_norm);

        if let Some(diag) = diagnostics.as_mut() {
            let cd = cycle_diagnostics(&space, &v, &h, &b_mat, &av_cols, &y, steps, r_old_norm);
            diag.absorb(&cd);
        }

        let cycle = CycleData {
            v: &v,
            h: &h,
            b: &b_mat,
            y: &y,
            steps,
        };
        let updated = update_recycle(&space, &cycle, params);
        if updated != space {
            space_dirty = true;
        }
        space = updated;
    }

    let status = if r_norm <= threshold {
        SolveStatus::Converged
    } else if stagnated(&boundary_norms) {
        SolveStatus::Stagnation
    } else {
        SolveStatus::MaxIterations
    };

    let report = SolveReport {
        status,
        matvecs: used(&counter),
        cycles_or_iterations: cycles,
        residual_history: history,
        cycle_marks,
        wall_time_s: start.elapsed().as_secs_f64(),
        final_residual_norm: r_norm,
        residual_kind: ResidualKind::TrueResidual,
        storage_nvectors,
        drift: false,
        diverged: false,
        diagnostics,
    };
    Ok((x, space, report))
}

#[allow(clippy::too_many_arguments)]
fn cycle_diagnostics(
    space: &RecycleSpace,
    v: &[Vec<f64>],
    h: &SmallMat,
    b_mat: &SmallMat,
    av_cols: &[Vec<f64>],
    y: &[f64],
    steps: usize,
    r_old_norm: f64,
) -> InvariantDiagnostics {
    let mut diag = InvariantDiagnostics::default();
    let k = space.k();

    let mut orth = 0.0;
    for (i, vi) in v.iter().enumerate() {
        for (l, vl) in v.iter().enumerate() {
            let e = if i == l { 1.0 } else { 0.0 };
            let d = dot(vi, vl) - e;
            orth += d * d;
        }
    }
    diag.arnoldi_orthonormality = orth.sqrt();

    let mut c_orth = 0.0f64;
    for vj in v {
        let leak = norm2(&space.ct_dot(vj));
        c_orth = c_orth.max(leak);
    }
    diag.inner_c_orthogonality = c_orth;

    let mut rel = 0.0;
    let mut est = 0.0f64;
    for (j, av) in av_cols.iter().enumerate().take(steps) {
        est = est.max(norm2(av));
        let mut resid = av.clone();
        for l in 0..k {
            axpy(-b_mat.get(l, j), &space.c_cols()[l], &mut resid);
        }
        for (l, vl) in v.iter().enumerate().take((j + 2).min(v.len())) {
            axpy(-h.get(l, j), vl, &mut resid);
        }
        rel += dot(&resid, &resid);
    }
    diag.op_norm_estimate = est;
    diag.arnoldi_relation = if est > 0.0 { rel.sqrt() / est } else { rel.sqrt() };

    // separated least squares: with z = -B y the C-component of
    // r_old - A V y - C z cancels
    if k > 0 && !av_cols.is_empty() {
        let n = v[0].len();
        let mut s_vec = vec![0.0; n];
        // r_old = v1 * ||r_old||
        axpy(r_old_norm, &v[0], &mut s_vec);
        for (j, av) in av_cols.iter().enumerate().take(steps) {
            axpy(-y[j], av, &mut s_vec);
        }
        let mut by = vec![0.0; k];
        for j in 0..steps {
            for l in 0..k {
                by[l] += b_mat.get(l, j) * y[j];
            }
        }
        // minus C z = +C (B y)
        for l in 0..k {
            axpy(by[l], &space.c_cols()[l], &mut s_vec);
        }
        let leak = norm2(&space.ct_dot(&s_vec));
        diag.separated_least_squares = if r_old_norm > 0.0 { leak / r_old_norm } else { leak };
    }
    diag
}
