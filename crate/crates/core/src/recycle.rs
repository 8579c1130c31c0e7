//! Recycle-space lifecycle.
//!
//! A [`RecycleSpace`] is the triple (U, C, R) with A U = C R, C orthonormal
//! and R upper triangular, held against the operator it was factored for.
//! Solvers iterate orthogonally to range(C) and fold the removed components
//! back into the solution through U R^-1. The space must be refreshed
//! (re-factored) whenever U changes outside the solver or the operator
//! changes, including a preconditioning-side switch.

use crate::error::{Error, Result};
use crate::linalg::{axpy, back_substitute, dot, norm2, scale, thin_qr_mgs, SmallMat};
use crate::operator::LinearOp;

/// Ratio of the smallest to largest |R| diagonal below which a column is
/// considered numerically rank-deficient and dropped.
const RANK_GUARD: f64 = 1e-12;

/// Remainder norm below which a candidate direction is skipped as degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RecycleSpace {
    n: usize,
    k_max: usize,
    u: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    r: SmallMat,
}

impl RecycleSpace {
    pub fn empty(n: usize, k_max: usize) -> Self {
        RecycleSpace {
            n,
            k_max,
            u: Vec::new(),
            c: Vec::new(),
            r: SmallMat::zeros(0, 0),
        }
    }

    /// Rebuild a space from checkpointed parts, checking shapes and that C
    /// is still orthonormal to loose tolerance.
    pub(crate) fn from_parts(
        n: usize,
        k_max: usize,
        u: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        r: SmallMat,
    ) -> Result<Self> {
        let k = u.len();
        if c.len() != k || r.rows() != k || r.cols() != k {
            return Err(Error::InvalidConfig(format!(
                "inconsistent recycle checkpoint: {} U, {} C, {}x{} R",
                k,
                c.len(),
                r.rows(),
                r.cols()
            )));
        }
        for col in u.iter().chain(c.iter()) {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
        }
        let space = RecycleSpace {
            n,
            k_max: k_max.max(k),
            u,
            c,
            r,
        };
        if space.orthonormality_defect() > 1e-8 {
            return Err(Error::InvalidConfig(
                "recycle checkpoint is corrupt: C has lost orthonormality".into(),
            ));
        }
        Ok(space)
    }

    /// Space spanned by the given directions, factored against `op`
    /// (costs `columns.len()` matvecs).
    pub fn from_directions(
        columns: Vec<Vec<f64>>,
        k_max: usize,
        op: &dyn LinearOp,
    ) -> Result<(Self, usize)> {
        let n = op.n();
        for col in &columns {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
        }
        let mut space = RecycleSpace {
            n,
            k_max: k_max.max(columns.len()),
            u: columns,
            c: Vec::new(),
            r: SmallMat::zeros(0, 0),
        };
        let dropped = space.refresh_qr(op)?;
        Ok((space, dropped))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u_cols(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn c_cols(&self) -> &[Vec<f64>] {
        &self.c
    }

    pub fn r_factor(&self) -> &SmallMat {
        &self.r
    }

    pub(crate) fn set_k_max(&mut self, k_max: usize) {
        self.k_max = k_max;
    }

    /// Re-factor A U = C R against `op` with a thin QR of the images,
    /// dropping numerically rank-deficient columns of U (smallest |R|
    /// diagonal first). Costs k matvecs; returns the number of dropped
    /// columns.
    pub fn refresh_qr(&mut self, op: &dyn LinearOp) -> Result<usize> {
        if self.u.is_empty() {
            self.c.clear();
            self.r = SmallMat::zeros(0, 0);
            return Ok(0);
        }
        if self.n != op.n() {
            return Err(Error::DimensionMismatch {
                expected: op.n(),
                got: self.n,
            });
        }
        let mut images: Vec<Vec<f64>> = self.u.iter().map(|col| op.apply(col)).collect();
        let mut dropped = 0;
        loop {
            if self.u.is_empty() {
                self.c.clear();
                self.r = SmallMat::zeros(0, 0);
                return Ok(dropped);
            }
            let (q, r) = thin_qr_mgs(&images);
            let k = self.u.len();
            let mut min_d = f64::INFINITY;
            let mut max_d: f64 = 0.0;
            let mut min_at = 0;
            for j in 0..k {
                let d = r.get(j, j).abs();
                if d < min_d {
                    min_d = d;
                    min_at = j;
                }
                max_d = max_d.max(d);
            }
            if min_d > RANK_GUARD * max_d && max_d > 0.0 {
                self.c = q;
                self.r = r;
                return Ok(dropped);
            }
            self.u.remove(min_at);
            images.remove(min_at);
            dropped += 1;
        }
    }

    /// C^T w.
    pub fn ct_dot(&self, w: &[f64]) -> Vec<f64> {
        self.c.iter().map(|cl| dot(cl, w)).collect()
    }

    /// w -= C eta.
    pub fn subtract_c(&self, eta: &[f64], w: &mut [f64]) {
        for (cl, &e) in self.c.iter().zip(eta) {
            axpy(-e, cl, w);
        }
    }

    /// U (R^-1 xi).
    pub fn u_rinv(&self, xi: &[f64]) -> Vec<f64> {
        debug_assert_eq!(xi.len(), self.k());
        let y = back_substitute(&self.r, xi, self.k());
        let mut out = vec![0.0; self.n];
        for (ul, &yl) in self.u.iter().zip(&y) {
            axpy(yl, ul, &mut out);
        }
        out
    }

    /// Orthogonalize the initial residual against C and fold the removed
    /// component into the solution guess. Returns
    /// `(x0, r0, xi0)` with `C^T r0 = 0`: `x0 = x_hat + U R^-1 (C^T r_hat)`
    /// carries the update applied immediately (the GCROT path), while
    /// `xi0 = -(C^T r_hat)` is the same update in deferred form (the
    /// BiCGStab path applies it at the very end).
    pub fn project_initial(&self, x_hat: &[f64], r_hat: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        if self.is_empty() {
            return (x_hat.to_vec(), r_hat.to_vec(), Vec::new());
        }
        let xi_raw = self.ct_dot(r_hat);
        let mut r0 = r_hat.to_vec();
        self.subtract_c(&xi_raw, &mut r0);
        let mut x0 = x_hat.to_vec();
        let update = self.u_rinv(&xi_raw);
        for (xi, ui) in x0.iter_mut().zip(&update) {
            *xi += ui;
        }
        let xi0 = xi_raw.iter().map(|v| -v).collect();
        (x0, r0, xi0)
    }

    /// Append a direction whose image under the operator is already known
    /// (recycling solvers obtain it algebraically from the augmented Arnoldi
    /// relation, so no matvec is spent). Returns false when the image is
    /// degenerate (numerically inside range(C)).
    pub(crate) fn append_direction(&mut self, u_new: Vec<f64>, au_new: &[f64]) -> bool {
        debug_assert_eq!(u_new.len(), self.n);
        debug_assert_eq!(au_new.len(), self.n);
        let scale_ref = norm2(au_new);
        let mut w = au_new.to_vec();
        let mut coeffs = self.ct_dot(&w);
        self.subtract_c(&coeffs, &mut w);
        if norm2(&w) < 0.7 * scale_ref {
            let extra = self.ct_dot(&w);
            self.subtract_c(&extra, &mut w);
            for (ci, ei) in coeffs.iter_mut().zip(&extra) {
                *ci += ei;
            }
        }
        let gamma = norm2(&w);
        if gamma <= DEGENERATE_TOL * scale_ref || gamma == 0.0 {
            return false;
        }
        scale(1.0 / gamma, &mut w);

        let k = self.k();
        let mut r_new = SmallMat::zeros(k + 1, k + 1);
        for j in 0..k {
            for i in 0..=j {
                r_new.set(i, j, self.r.get(i, j));
            }
        }
        for (i, &ci) in coeffs.iter().enumerate() {
            r_new.set(i, k, ci);
        }
        r_new.set(k, k, gamma);
        self.r = r_new;
        self.c.push(w);
        self.u.push(u_new);
        true
    }

    /// Keep only the columns at `keep` (sorted ascending), re-establishing
    /// the triangular factor with a small QR; no matvecs.
    pub(crate) fn retain_columns(&mut self, keep: &[usize]) {
        let k = self.k();
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(keep.iter().all(|&j| j < k));
        if keep.len() == k {
            return;
        }
        let kept_u: Vec<Vec<f64>> = keep.iter().map(|&j| self.u[j].clone()).collect();
        let r_cols: Vec<Vec<f64>> = keep.iter().map(|&j| self.r.col(j).to_vec()).collect();
        let (q_small, r_small) = thin_qr_mgs(&r_cols);
        // C' = C * Q_small
        let mut c_new = Vec::with_capacity(keep.len());
        for qcol in &q_small {
            let mut col = vec![0.0; self.n];
            for (cl, &w) in self.c.iter().zip(qcol) {
                axpy(w, cl, &mut col);
            }
            c_new.push(col);
        }
        self.u = kept_u;
        self.c = c_new;
        self.r = r_small;
    }

    /// ||C^T C - I||_F.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.k();
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                let e = if i == j { 1.0 } else { 0.0 };
                let d = dot(&self.c[i], &self.c[j]) - e;
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// ||A U - C R||_F computed with fresh applications of `op`
    /// (costs k matvecs; test/diagnostic use).
    pub fn consistency_defect(&self, op: &dyn LinearOp) -> f64 {
        let mut s = 0.0;
        for j in 0..self.k() {
            let mut resid = op.apply(&self.u[j]);
            for l in 0..self.k() {
                axpy(-self.r.get(l, j), &self.c[l], &mut resid);
            }
            s += dot(&resid, &resid);
        }
        s.sqrt()
    }

    /// Smallest and largest |R| diagonal magnitudes.
    pub fn r_diagonal_range(&self) -> (f64, f64) {
        let k = self.k();
        if k == 0 {
            return (0.0, 0.0);
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for j in 0..k {
            let d = self.r.get(j, j).abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }
}
