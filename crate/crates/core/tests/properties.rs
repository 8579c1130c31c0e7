//! Property tests for the stencil kernels, preconditioners, and file
//! formats, quantified over randomized grids and coefficient bands.

#![allow(clippy::needless_range_loop)]

use kryrec::grid::GridShape;
use kryrec::linalg::norm2;
use kryrec::precond::{self, PrecondKind, PreconditionerSpec, Side};
use kryrec::stencil::{cross_offsets, StencilMatrix};
use proptest::prelude::*;

/// Random diagonally dominant stencil matrix on a random 2D/3D grid.
fn arb_matrix() -> impl Strategy<Value = (StencilMatrix, u64)> {
    (2usize..7, 2usize..7, 1usize..4, any::<u64>()).prop_map(|(nx, ny, nz, seed)| {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let shape = GridShape::new(nx, ny, nz).unwrap();
        let offsets = cross_offsets(shape);
        let n = shape.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bands = vec![vec![0.0; n]; offsets.len()];
        for (d, off) in offsets.iter().enumerate() {
            for row in 0..n {
                if *off == (0, 0, 0) {
                    bands[d][row] = 8.0 + rng.gen::<f64>();
                } else if shape.neighbor(row, *off).is_some() {
                    bands[d][row] = 2.0 * rng.gen::<f64>() - 1.0;
                }
            }
        }
        (StencilMatrix::new(shape, offsets, bands).unwrap(), seed)
    })
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// matvec(a*x + y) == a*matvec(x) + matvec(y) to 1e-13 relative.
    #[test]
    fn matvec_is_linear((a, seed) in arb_matrix(), alpha in -4.0f64..4.0) {
        let n = a.n();
        let x = random_vec(n, seed ^ 1);
        let y = random_vec(n, seed ^ 2);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| alpha * xi + yi).collect();
        let lhs = a.matvec(&combo).unwrap();
        let ax = a.matvec(&x).unwrap();
        let ay = a.matvec(&y).unwrap();
        let scale = norm2(&lhs).max(1.0);
        for i in 0..n {
            prop_assert!((lhs[i] - (alpha * ax[i] + ay[i])).abs() <= 1e-13 * scale);
        }
    }

    /// matvec agrees with the dense expansion oracle to 1e-14 relative.
    #[test]
    fn matvec_matches_dense_oracle((a, seed) in arb_matrix()) {
        let x = random_vec(a.n(), seed ^ 3);
        let dense = a.to_dense().unwrap();
        let fast = a.matvec(&x).unwrap();
        let slow = dense.mul_vec(&x);
        let scale = norm2(&slow).max(1.0);
        for i in 0..a.n() {
            prop_assert!((fast[i] - slow[i]).abs() <= 1e-14 * scale);
        }
    }

    /// An impulse on any cell only reaches that cell and its in-grid
    /// stencil neighbors (no wraparound through boundaries).
    #[test]
    fn impulse_stays_within_stencil((a, _) in arb_matrix(), frac in 0.0f64..1.0) {
        let n = a.n();
        let shape = a.shape();
        let cell = ((n - 1) as f64 * frac) as usize;
        let mut x = vec![0.0; n];
        x[cell] = 1.0;
        let y = a.matvec(&x).unwrap();
        let (cx, cy, cz) = shape.coords(cell);
        for (i, &v) in y.iter().enumerate() {
            if v != 0.0 {
                let (ix, iy, iz) = shape.coords(i);
                let dist = cx.abs_diff(ix) + cy.abs_diff(iy) + cz.abs_diff(iz);
                prop_assert!(dist <= 1, "impulse at {cell} leaked to {i}");
            }
        }
    }

    /// Preconditioner application is linear and bitwise deterministic.
    #[test]
    fn preconditioners_are_linear_and_deterministic(
        (a, seed) in arb_matrix(),
        kind in prop_oneof![Just(PrecondKind::Jacobi), Just(PrecondKind::Ssor)],
        sweeps in 1usize..4,
    ) {
        let spec = PreconditionerSpec {
            kind,
            sweeps,
            relax: if kind == PrecondKind::Jacobi { 0.8 } else { 1.0 },
            side: Side::Left,
        };
        let n = a.n();
        let r1 = random_vec(n, seed ^ 4);
        let r2 = random_vec(n, seed ^ 5);
        let sum: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| x + y).collect();
        let z1 = precond::apply(&spec, &a, &r1).unwrap();
        let z2 = precond::apply(&spec, &a, &r2).unwrap();
        let zs = precond::apply(&spec, &a, &sum).unwrap();
        let scale = norm2(&zs).max(1.0);
        for i in 0..n {
            prop_assert!((z1[i] + z2[i] - zs[i]).abs() <= 1e-13 * scale);
        }
        let z1_again = precond::apply(&spec, &a, &r1).unwrap();
        prop_assert_eq!(z1, z1_again);
    }

    /// The plain-text formats round-trip matrices and vectors exactly.
    #[test]
    fn file_formats_round_trip_exactly((a, seed) in arb_matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let mpath = dir.path().join("m.stencil");
        kryrec::io::write_matrix(&mpath, &a).unwrap();
        prop_assert_eq!(&kryrec::io::read_matrix(&mpath).unwrap(), &a);

        let v: Vec<f64> = random_vec(a.n(), seed ^ 6)
            .into_iter()
            .enumerate()
            .map(|(i, x)| x * 10f64.powi((i % 24) as i32 - 12))
            .collect();
        let vpath = dir.path().join("v.vec");
        kryrec::io::write_vector(&vpath, &v).unwrap();
        prop_assert_eq!(kryrec::io::read_vector(&vpath).unwrap(), v);
    }
}
