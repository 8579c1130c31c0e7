//! Smoothing preconditioners.
//!
//! The preconditioner is defined operationally: `apply` runs a fixed number
//! of fixed-point sweeps on A z = r starting from z = 0, so the map
//! r -> z = M^-1 r is linear and deterministic, which the Krylov methods
//! require. Jacobi runs `sweeps` relaxed sweeps plus one extra global
//! smoothing sweep; SSOR runs one forward and one backward SOR sweep per
//! sweep count.

use crate::error::{Error, Result};
use crate::stencil::StencilMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    Identity,
    Jacobi,
    Ssor,
}

impl PrecondKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrecondKind::Identity => "identity",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Ssor => "ssor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(PrecondKind::Identity),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "ssor" => Ok(PrecondKind::Ssor),
            other => Err(Error::InvalidConfig(format!(
                "unknown preconditioner kind '{other}' (expected identity|jacobi|ssor)"
            ))),
        }
    }
}

/// Which side of the matrix the preconditioner is applied to. GMRES-family
/// solvers use left preconditioning; BiCGStab-family solvers use right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct PreconditionerSpec {
    pub kind: PrecondKind,
    pub sweeps: usize,
    /// Relaxation factor in (0, 2).
    pub relax: f64,
    pub side: Side,
}

impl PreconditionerSpec {
    pub fn identity() -> Self {
        PreconditionerSpec {
            kind: PrecondKind::Identity,
            sweeps: 1,
            relax: 1.0,
            side: Side::Left,
        }
    }

    /// Damped Jacobi smoothing, five sweeps plus a global smoothing sweep.
    pub fn jacobi() -> Self {
        PreconditionerSpec {
            kind: PrecondKind::Jacobi,
            sweeps: 5,
            relax: 0.8,
            side: Side::Left,
        }
    }

    pub fn ssor() -> Self {
        PreconditionerSpec {
            kind: PrecondKind::Ssor,
            sweeps: 5,
            relax: 1.0,
            side: Side::Left,
        }
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidConfig("precond.sweeps must be >= 1".into()));
        }
        if !(self.relax > 0.0 && self.relax < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "precond.relax must lie in (0, 2), got {}",
                self.relax
            )));
        }
        Ok(())
    }
}

/// A spec validated against a concrete matrix, with the inverse diagonal
/// cached. Pure function of immutable inputs; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PrecondKind,
    sweeps: usize,
    relax: f64,
    inv_diag: Vec<f64>,
}

impl Preconditioner {
    pub fn prepare(spec: &PreconditionerSpec, a: &StencilMatrix) -> Result<Self> {
        spec.validate()?;
        let mut inv_diag = Vec::with_capacity(a.n());
        for (row, &d) in a.diag_band().iter().enumerate() {
            if d == 0.0 {
                return Err(Error::SingularPreconditioner { row });
            }
            inv_diag.push(1.0 / d);
        }
        Ok(Preconditioner {
            kind: spec.kind,
            sweeps: spec.sweeps,
            relax: spec.relax,
            inv_diag,
        })
    }

    /// z = M^-1 r. `work` is an n-vector scratch buffer.
    pub fn apply_into(&self, a: &StencilMatrix, r: &[f64], z: &mut [f64], work: &mut [f64]) {
        debug_assert_eq!(r.len(), a.n());
        debug_assert_eq!(z.len(), a.n());
        match self.kind {
            PrecondKind::Identity => z.copy_from_slice(r),
            PrecondKind::Jacobi => {
                // first sweep from z = 0 is just the scaled residual
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
                    *zi = self.relax * di * ri;
                }
                // remaining local sweeps plus the global smoothing sweep
                for _ in 1..self.sweeps + 1 {
                    a.matvec_into(z, work);
                    for ((zi, (ri, wi)), di) in
                        z.iter_mut().zip(r.iter().zip(work.iter())).zip(&self.inv_diag)
                    {
                        *zi += self.relax * di * (ri - wi);
                    }
                }
            }
            PrecondKind::Ssor => {
                z.fill(0.0);
                let n = a.n();
                for _ in 0..self.sweeps {
                    for i in 0..n {
                        z[i] += self.relax * self.inv_diag[i] * (r[i] - a.row_dot(i, z));
                    }
                    for i in (0..n).rev() {
                        z[i] += self.relax * self.inv_diag[i] * (r[i] - a.row_dot(i, z));
                    }
                }
            }
        }
    }
}

/// One-shot application z = M^-1 r; validates and prepares on every call.
pub fn apply(spec: &PreconditionerSpec, a: &StencilMatrix, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: r.len(),
        });
    }
    let p = Preconditioner::prepare(spec, a)?;
    let mut z = vec![0.0; a.n()];
    let mut work = vec![0.0; a.n()];
    p.apply_into(a, r, &mut z, &mut work);
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use crate::linalg::norm2;
    use crate::problems::{make_poisson, PoissonBc};
    use crate::stencil::identity_stencil;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn diagonal_matrix(values: &[f64]) -> StencilMatrix {
        let shape = GridShape::new(values.len(), 1, 1).unwrap();
        let offsets = vec![(0, 0, 0), (-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0)];
        let mut bands = vec![vec![0.0; values.len()]; 5];
        bands[0] = values.to_vec();
        StencilMatrix::new(shape, offsets, bands).unwrap()
    }

    #[test]
    fn identity_kind_returns_input() {
        let a = identity_stencil(GridShape::two_d(3, 3).unwrap());
        let r: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let z = apply(&PreconditionerSpec::identity(), &a, &r).unwrap();
        assert_eq!(z, r);
    }

    #[test]
    fn one_unrelaxed_jacobi_sweep_on_diagonal_matrix_is_exact() {
        let a = diagonal_matrix(&[2.0, 4.0, 8.0]);
        let spec = PreconditionerSpec {
            kind: PrecondKind::Jacobi,
            sweeps: 1,
            relax: 1.0,
            side: Side::Left,
        };
        let z = apply(&spec, &a, &[2.0, 4.0, 8.0]).unwrap();
        for zi in z {
            assert!((zi - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobi_matches_unrolled_sweeps() {
        let a = make_poisson(GridShape::two_d(8, 8).unwrap(), PoissonBc::Dirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
        let spec = PreconditionerSpec::jacobi();
        let z = apply(&spec, &a, &r).unwrap();

        // unrolled reference: sweeps + 1 relaxed Jacobi iterations from zero
        let inv_d: Vec<f64> = a.diag_band().iter().map(|d| 1.0 / d).collect();
        let mut z_ref = vec![0.0; 64];
        for _ in 0..spec.sweeps + 1 {
            let az = a.matvec(&z_ref).unwrap();
            for i in 0..64 {
                z_ref[i] += spec.relax * inv_d[i] * (r[i] - az[i]);
            }
        }
        for i in 0..64 {
            assert!((z[i] - z_ref[i]).abs() <= 1e-13 * norm2(&z_ref));
        }
    }

    #[test]
    fn apply_is_linear() {
        let a = make_poisson(GridShape::two_d(8, 8).unwrap(), PoissonBc::Dirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for spec in [PreconditionerSpec::jacobi(), PreconditionerSpec::ssor()] {
            let r1: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
            let r2: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
            let sum: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + b).collect();
            let z1 = apply(&spec, &a, &r1).unwrap();
            let z2 = apply(&spec, &a, &r2).unwrap();
            let zs = apply(&spec, &a, &sum).unwrap();
            let scale = norm2(&zs).max(1.0);
            for i in 0..64 {
                assert!(
                    (z1[i] + z2[i] - zs[i]).abs() <= 1e-13 * scale,
                    "{} nonlinearity at {i}",
                    spec.kind.name()
                );
            }
        }
    }

    #[test]
    fn apply_is_deterministic_bitwise() {
        let a = make_poisson(GridShape::two_d(6, 6).unwrap(), PoissonBc::Dirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r: Vec<f64> = (0..36).map(|_| rng.gen::<f64>()).collect();
        for spec in [PreconditionerSpec::jacobi(), PreconditionerSpec::ssor()] {
            let z1 = apply(&spec, &a, &r).unwrap();
            let z2 = apply(&spec, &a, &r).unwrap();
            assert_eq!(z1, z2);
        }
    }

    #[test]
    fn sweeps_reduce_local_residual_on_spd_matrix() {
        let a = make_poisson(GridShape::two_d(8, 8).unwrap(), PoissonBc::Dirichlet);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
        for spec in [PreconditionerSpec::jacobi(), PreconditionerSpec::ssor()] {
            let z = apply(&spec, &a, &r).unwrap();
            let az = a.matvec(&z).unwrap();
            let rem: Vec<f64> = r.iter().zip(&az).map(|(ri, ai)| ri - ai).collect();
            assert!(
                norm2(&rem) < norm2(&r),
                "{} did not reduce the local residual",
                spec.kind.name()
            );
        }
    }

    #[test]
    fn zero_diagonal_is_rejected() {
        // bypass StencilMatrix's own diagonal check by building directly is
        // not possible; instead check the spec validation path
        let bad = PreconditionerSpec {
            kind: PrecondKind::Jacobi,
            sweeps: 0,
            relax: 0.8,
            side: Side::Left,
        };
        assert!(bad.validate().is_err());
        let bad2 = PreconditionerSpec {
            kind: PrecondKind::Jacobi,
            sweeps: 5,
            relax: 2.0,
            side: Side::Left,
        };
        assert!(bad2.validate().is_err());
    }
}
