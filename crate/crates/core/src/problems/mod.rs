//! Test-problem and sequence generators: Poisson and convection-diffusion
//! stencils, randomly masked porous geometry, perturbed right-hand-side
//! streams, and the toy fractional-step flow driver (see [`flow`]).

pub mod flow;

pub use flow::{fractional_step_sequence, FlowDriver, FlowParams, Geometry};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::linalg::norm2;
use crate::stencil::{cross_offsets, StencilMatrix};

/// Boundary conditions for [`make_poisson`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonBc {
    /// Homogeneous Dirichlet on all boundaries (SPD, diagonal 2*dims).
    Dirichlet,
    /// Periodic in x, homogeneous Neumann on the remaining boundaries
    /// (channel-style pressure matrix). The operator is singular up to a
    /// constant, so cell 0 is pinned to a Dirichlet anchor row.
    PeriodicX,
}

/// Standard 5-point (2D) or 7-point (3D) Laplacian. Periodic wrap couplings
/// are carried by two extra long-range x-offsets whose coefficients are
/// nonzero only on the wrapping boundary layer; with `PeriodicX` the grid
/// must have nx >= 3 so the wrap offsets are distinct from the cross.
pub fn make_poisson(shape: GridShape, bc: PoissonBc) -> StencilMatrix {
    match bc {
        PoissonBc::Dirichlet => {
            let offsets = cross_offsets(shape);
            let n = shape.n();
            // each axis of extent > 1 contributes 2 to the diagonal, so a
            // degenerate nx x 1 grid is the 1D operator with diagonal 2
            let dims = [shape.nx, shape.ny, shape.nz]
                .iter()
                .filter(|&&e| e > 1)
                .count()
                .max(1) as f64;
            let mut bands = vec![vec![0.0; n]; offsets.len()];
            for row in 0..n {
                for (d, off) in offsets.iter().enumerate() {
                    if *off == (0, 0, 0) {
                        bands[d][row] = 2.0 * dims;
                    } else if shape.neighbor(row, *off).is_some() {
                        bands[d][row] = -1.0;
                    }
                }
            }
            StencilMatrix::new(shape, offsets, bands).expect("generator emits a valid stencil")
        }
        PoissonBc::PeriodicX => {
            assert!(shape.nx >= 3, "periodic_x needs nx >= 3");
            // all faces are coupled except through the y/z walls
            let mask = vec![true; shape.n()];
            flux_laplacian(shape, &mask, 0)
        }
    }
}

/// Laplacian of the face-flux form used by the pressure projection: each
/// coupled face contributes +1 to the diagonal and -1 towards the neighbor,
/// x is periodic, y (and z) boundaries are walls, faces touching non-fluid
/// cells are uncoupled, and non-fluid cells become identity rows. Row
/// `anchor` is pinned to identity to remove the constant null space.
pub(crate) fn flux_laplacian(shape: GridShape, fluid: &[bool], anchor: usize) -> StencilMatrix {
    let n = shape.n();
    let nx = shape.nx as i32;
    let mut offsets = cross_offsets(shape);
    offsets.push((nx - 1, 0, 0));
    offsets.push((-(nx - 1), 0, 0));
    let mut bands = vec![vec![0.0; n]; offsets.len()];
    let diag = 0; // cross_offsets puts (0,0,0) first

    // periodic neighbor in x: try the unit offset, else the wrap offset
    let x_neighbor = |row: usize, step: i32| -> (usize, usize) {
        // returns (offset index, neighbor row)
        let unit = (step, 0, 0);
        if let Some(nb) = shape.neighbor(row, unit) {
            let d = offsets.iter().position(|&o| o == unit).unwrap();
            (d, nb)
        } else {
            let wrap = (-step * (nx - 1), 0, 0);
            let nb = shape.neighbor(row, wrap).expect("periodic wrap stays in grid");
            let d = offsets.iter().position(|&o| o == wrap).unwrap();
            (d, nb)
        }
    };

    for row in 0..n {
        if !fluid[row] || row == anchor {
            bands[diag][row] = 1.0;
            continue;
        }
        for step in [-1i32, 1] {
            let (d, nb) = x_neighbor(row, step);
            if fluid[nb] {
                bands[diag][row] += 1.0;
                bands[d][row] -= 1.0;
            }
        }
        let mut walled = vec![(0, -1, 0), (0, 1, 0)];
        if !shape.is_two_d() {
            walled.push((0, 0, -1));
            walled.push((0, 0, 1));
        }
        for off in walled {
            if let Some(nb) = shape.neighbor(row, off) {
                if fluid[nb] {
                    let d = offsets.iter().position(|&o| o == off).unwrap();
                    bands[diag][row] += 1.0;
                    bands[d][row] -= 1.0;
                }
            }
        }
        // a fluid cell sealed off from every neighbor would leave a zero
        // diagonal; connectivity screening prevents it, but pin defensively
        if bands[diag][row] == 0.0 {
            bands[diag][row] = 1.0;
        }
    }
    // anchored couplings into the anchor cell stay: the anchor column keeps
    // the -1 entries of its fluid neighbors, which makes the matrix mildly
    // nonsymmetric but nonsingular.
    StencilMatrix::new(shape, offsets, bands).expect("generator emits a valid stencil")
}

/// Dirichlet Poisson plus first-order upwind convection of strength `peclet`
/// along the (normalized) `wind` direction. `peclet = 0` returns the
/// Poisson matrix unchanged.
pub fn make_convection_diffusion(
    shape: GridShape,
    peclet: f64,
    wind: [f64; 3],
) -> Result<StencilMatrix> {
    if peclet < 0.0 {
        return Err(Error::Generation(format!(
            "peclet must be nonnegative, got {peclet}"
        )));
    }
    let base = make_poisson(shape, PoissonBc::Dirichlet);
    if peclet == 0.0 {
        return Ok(base);
    }
    let wind_norm = (wind[0] * wind[0] + wind[1] * wind[1] + wind[2] * wind[2]).sqrt();
    if wind_norm == 0.0 {
        return Err(Error::Generation("wind must be nonzero when peclet > 0".into()));
    }
    if shape.is_two_d() && wind[2] != 0.0 {
        return Err(Error::Generation("wind has a z component on a 2D grid".into()));
    }

    let offsets = base.offsets().to_vec();
    let n = shape.n();
    let mut bands: Vec<Vec<f64>> = (0..offsets.len()).map(|d| base.band(d).to_vec()).collect();
    let diag = base.diag_index();
    let axes = [(1i32, 0i32, 0i32), (0, 1, 0), (0, 0, 1)];
    for (axis, unit) in axes.iter().enumerate() {
        let c = peclet * wind[axis] / wind_norm;
        if c == 0.0 {
            continue;
        }
        // upwind difference: the coefficient couples against the upstream
        // neighbor, truncated at the upstream Dirichlet boundary
        let upstream = if c > 0.0 {
            (-unit.0, -unit.1, -unit.2)
        } else {
            *unit
        };
        let d = offsets
            .iter()
            .position(|&o| o == upstream)
            .expect("cross stencil has all unit offsets");
        for row in 0..n {
            bands[diag][row] += c.abs();
            if shape.neighbor(row, upstream).is_some() {
                bands[d][row] -= c.abs();
            }
        }
    }
    StencilMatrix::new(shape, offsets, bands)
}

/// Deterministically mask cells solid with probability `1 - porosity`,
/// retrying with derived seeds until the fluid cells form one face-connected
/// component. Used for both the standalone porous matrix and the porous flow
/// geometry.
pub(crate) fn solid_mask(shape: GridShape, porosity: f64, seed: u64) -> Result<Vec<bool>> {
    const MAX_TRIES: u64 = 10;
    for attempt in 0..MAX_TRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let fluid: Vec<bool> = (0..shape.n()).map(|_| rng.gen::<f64>() < porosity).collect();
        let n_fluid = fluid.iter().filter(|&&f| f).count();
        if n_fluid == 0 {
            continue;
        }
        if connected(shape, &fluid, n_fluid) {
            return Ok(fluid);
        }
    }
    Err(Error::Generation(format!(
        "no connected fluid domain after {MAX_TRIES} tries (porosity {porosity}, seed {seed})"
    )))
}

fn connected(shape: GridShape, fluid: &[bool], n_fluid: usize) -> bool {
    let start = match fluid.iter().position(|&f| f) {
        Some(i) => i,
        None => return false,
    };
    let mut seen = vec![false; shape.n()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0;
    let mut offs = vec![(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0)];
    if !shape.is_two_d() {
        offs.push((0, 0, -1));
        offs.push((0, 0, 1));
    }
    while let Some(c) = stack.pop() {
        count += 1;
        for off in &offs {
            if let Some(nb) = shape.neighbor(c, *off) {
                if fluid[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count == n_fluid
}

/// Dirichlet Poisson with randomly masked solid cells: solid rows become
/// identity rows while all couplings of fluid rows are left unchanged, a
/// cheap stand-in for immersed-boundary decoupling. `porosity = 1` returns
/// the plain Poisson matrix.
pub fn make_porous_mask(shape: GridShape, porosity: f64, seed: u64) -> Result<StencilMatrix> {
    if !(porosity > 0.2 && porosity <= 1.0) {
        return Err(Error::Generation(format!(
            "porosity must lie in (0.2, 1], got {porosity}"
        )));
    }
    let base = make_poisson(shape, PoissonBc::Dirichlet);
    if porosity == 1.0 {
        return Ok(base);
    }
    let fluid = solid_mask(shape, porosity, seed)?;
    let offsets = base.offsets().to_vec();
    let diag = base.diag_index();
    let mut bands: Vec<Vec<f64>> = (0..offsets.len()).map(|d| base.band(d).to_vec()).collect();
    for (row, &is_fluid) in fluid.iter().enumerate() {
        if !is_fluid {
            for (d, band) in bands.iter_mut().enumerate() {
                band[row] = if d == diag { 1.0 } else { 0.0 };
            }
        }
    }
    StencilMatrix::new(shape, offsets, bands)
}

/// Key-value metadata describing how a sequence was generated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceMeta {
    pub generator: String,
    pub seed: u64,
    pub entries: Vec<(String, String)>,
}

impl SequenceMeta {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// A fixed matrix with an ordered stream of right-hand sides, the regime in
/// which recycling pays off. `matrix_epoch` stays constant while the matrix
/// does; a consumer must refresh recycle spaces whenever it changes.
#[derive(Debug, Clone)]
pub struct SystemSequence {
    pub matrix: StencilMatrix,
    pub rhs: Vec<Vec<f64>>,
    pub matrix_epoch: u64,
    pub meta: SequenceMeta,
}

impl SystemSequence {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }
}

/// Slowly changing right-hand sides around `b0`: a fixed seeded perturbation
/// direction scaled by `amplitude * sin(t)`, plus an optional fresh seeded
/// `jitter` component per step. Both scales are relative to ||b0||.
pub fn perturbed_rhs_sequence(
    matrix: StencilMatrix,
    b0: &[f64],
    steps: usize,
    amplitude: f64,
    jitter: f64,
    seed: u64,
) -> Result<SystemSequence> {
    if b0.len() != matrix.n() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n(),
            got: b0.len(),
        });
    }
    let n = matrix.n();
    let b_scale = norm2(b0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let dn = norm2(&dir);
    if dn > 0.0 {
        crate::linalg::scale(b_scale / dn, &mut dir);
    }
    let mut rhs = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut b = b0.to_vec();
        crate::linalg::axpy(amplitude * (t as f64).sin(), &dir, &mut b);
        if jitter > 0.0 {
            let mut fresh: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let fn_ = norm2(&fresh);
            if fn_ > 0.0 {
                crate::linalg::scale(b_scale / fn_, &mut fresh);
            }
            crate::linalg::axpy(jitter, &fresh, &mut b);
        }
        rhs.push(b);
    }
    let mut meta = SequenceMeta {
        generator: "perturbed_rhs".into(),
        seed,
        ..Default::default()
    };
    meta.push("steps", steps);
    meta.push("amplitude", amplitude);
    meta.push("jitter", jitter);
    Ok(SystemSequence {
        matrix,
        rhs,
        matrix_epoch: 0,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_1d_n2_dense_form() {
        let a = make_poisson(GridShape::new(2, 1, 1).unwrap(), PoissonBc::Dirichlet);
        let d = a.to_dense().unwrap();
        assert_eq!(d.get(0, 0), 2.0);
        assert_eq!(d.get(0, 1), -1.0);
        assert_eq!(d.get(1, 0), -1.0);
        assert_eq!(d.get(1, 1), 2.0);
    }

    #[test]
    fn poisson_2d_interior_row_is_textbook_five_point() {
        let shape = GridShape::two_d(3, 3).unwrap();
        let a = make_poisson(shape, PoissonBc::Dirichlet);
        let center = shape.index(1, 1, 0);
        let d = a.to_dense().unwrap();
        assert_eq!(d.get(center, center), 4.0);
        for nb in [
            shape.index(0, 1, 0),
            shape.index(2, 1, 0),
            shape.index(1, 0, 0),
            shape.index(1, 2, 0),
        ] {
            assert_eq!(d.get(center, nb), -1.0);
        }
        let row_sum: f64 = d.row(center).iter().sum();
        assert_eq!(row_sum, 0.0);
    }

    #[test]
    fn dirichlet_poisson_is_symmetric_and_spd() {
        let a = make_poisson(GridShape::two_d(6, 5).unwrap(), PoissonBc::Dirichlet);
        let d = a.to_dense().unwrap();
        assert_eq!(d.asymmetry(), 0.0);
        let n = a.n();
        let na = nalgebra::DMatrix::from_row_slice(n, n, d.as_slice());
        assert!(na.cholesky().is_some());
    }

    #[test]
    fn periodic_x_wraps_and_is_anchored() {
        let shape = GridShape::two_d(5, 4).unwrap();
        let a = make_poisson(shape, PoissonBc::PeriodicX);
        assert_eq!(a.offsets().len(), 7);
        let d = a.to_dense().unwrap();
        // anchor row
        for c in 0..a.n() {
            assert_eq!(d.get(0, c), if c == 0 { 1.0 } else { 0.0 });
        }
        // wrap coupling: cell (0, 1) couples to (4, 1)
        let c0 = shape.index(0, 1, 0);
        let c4 = shape.index(4, 1, 0);
        assert_eq!(d.get(c0, c4), -1.0);
        assert_eq!(d.get(c4, c0), -1.0);
        // interior-in-y row sums vanish away from the anchor
        let mid = shape.index(2, 2, 0);
        let row_sum: f64 = d.row(mid).iter().sum();
        assert_eq!(row_sum, 0.0);
        // wall-adjacent cell has Neumann-reduced diagonal
        let wall = shape.index(2, 0, 0);
        assert_eq!(d.get(wall, wall), 3.0);
    }

    #[test]
    fn convection_diffusion_reduces_to_poisson_at_zero_peclet() {
        let shape = GridShape::two_d(4, 4).unwrap();
        let p = make_poisson(shape, PoissonBc::Dirichlet);
        let c = make_convection_diffusion(shape, 0.0, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, c);
    }

    #[test]
    fn convection_makes_the_matrix_nonsymmetric() {
        let shape = GridShape::two_d(4, 4).unwrap();
        let c = make_convection_diffusion(shape, 10.0, [1.0, 0.0, 0.0]).unwrap();
        let d = c.to_dense().unwrap();
        assert!(d.asymmetry() > 0.0);
    }

    #[test]
    fn upwind_row_pattern_on_3x3() {
        // wind +x with peclet 2: diagonal 4+2, upstream (west) coupling -1-2
        let shape = GridShape::two_d(3, 3).unwrap();
        let a = make_convection_diffusion(shape, 2.0, [1.0, 0.0, 0.0]).unwrap();
        let d = a.to_dense().unwrap();
        let center = shape.index(1, 1, 0);
        assert_eq!(d.get(center, center), 6.0);
        assert_eq!(d.get(center, shape.index(0, 1, 0)), -3.0);
        assert_eq!(d.get(center, shape.index(2, 1, 0)), -1.0);
        assert_eq!(d.get(center, shape.index(1, 0, 0)), -1.0);
        assert_eq!(d.get(center, shape.index(1, 2, 0)), -1.0);
        // upstream boundary row keeps the convective diagonal, so its row
        // sum is positive: 1 from the Dirichlet truncation plus the peclet
        let west = shape.index(0, 1, 0);
        let row_sum: f64 = d.row(west).iter().sum();
        assert_eq!(row_sum, 3.0);
    }

    #[test]
    fn porous_full_porosity_equals_poisson() {
        let shape = GridShape::two_d(5, 5).unwrap();
        let p = make_poisson(shape, PoissonBc::Dirichlet);
        let m = make_porous_mask(shape, 1.0, 9).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn porous_mask_is_deterministic_and_has_identity_solid_rows() {
        let shape = GridShape::two_d(8, 8).unwrap();
        let a = make_porous_mask(shape, 0.8, 1234).unwrap();
        let b = make_porous_mask(shape, 0.8, 1234).unwrap();
        assert_eq!(a, b);
        let d = a.to_dense().unwrap();
        let mut solid_rows = 0;
        for r in 0..a.n() {
            let is_identity = (0..a.n()).all(|c| d.get(r, c) == if r == c { 1.0 } else { 0.0 });
            let diag = d.get(r, r);
            if diag == 1.0 && is_identity {
                solid_rows += 1;
            }
        }
        assert!(solid_rows > 0, "seed produced no solid cells");
    }

    #[test]
    fn porous_rejects_low_porosity() {
        let shape = GridShape::two_d(4, 4).unwrap();
        assert!(make_porous_mask(shape, 0.1, 0).is_err());
    }

    #[test]
    fn perturbed_sequence_shares_matrix_and_starts_at_b0() {
        let shape = GridShape::two_d(4, 4).unwrap();
        let a = make_poisson(shape, PoissonBc::Dirichlet);
        let b0 = vec![1.0; a.n()];
        let seq = perturbed_rhs_sequence(a, &b0, 5, 0.01, 0.0, 7).unwrap();
        assert_eq!(seq.len(), 5);
        assert_eq!(seq.rhs[0], b0);
        assert_ne!(seq.rhs[1], b0);
        assert_eq!(seq.matrix_epoch, 0);
    }
}
