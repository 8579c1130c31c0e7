//! Toy 2D fractional-step driver.
//!
//! Staggered velocities (u on x-faces, v on y-faces), collocated pressure,
//! periodic in x, no-slip walls in y. Each step runs an explicit
//! Adams-Bashforth advection-diffusion predictor, forms the pressure
//! right-hand side from the intermediate divergence, and applies the
//! velocity correction once a pressure is supplied. The pressure matrix is
//! fixed for the whole run, so the emitted systems share one matrix and
//! only the right-hand side changes step to step.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{flux_laplacian, solid_mask, SequenceMeta, SystemSequence};
use crate::config::{SolverConfig, TolMode};
use crate::error::{Error, Result};
use crate::gmres::gmres_m;
use crate::grid::GridShape;
use crate::linalg::norm2;
use crate::operator::PreconditionedOp;
use crate::precond::PreconditionerSpec;
use crate::stencil::StencilMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Channel,
    Porous { porosity: f64, seed: u64 },
}

impl Geometry {
    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Channel => "channel",
            Geometry::Porous { .. } => "porous",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowParams {
    pub dt: f64,
    pub nu: f64,
    /// Mean pressure-gradient forcing along x.
    pub forcing: f64,
    /// Amplitude of the seeded divergence-free initial perturbation.
    pub perturbation: f64,
    pub seed: u64,
    /// Relative tolerance of the internal reference pressure solve used
    /// when generating sequences.
    pub pressure_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            dt: 1e-3,
            nu: 0.05,
            forcing: 1.0,
            perturbation: 0.5,
            seed: 0,
            pressure_tol: 1e-10,
        }
    }
}

pub struct FlowDriver {
    shape: GridShape,
    h: f64,
    params: FlowParams,
    geometry: Geometry,
    fluid: Vec<bool>,
    /// u[i + nx*j]: x-velocity at face (i*h, (j+0.5)*h), periodic in i.
    u: Vec<f64>,
    /// v[i + nx*j]: y-velocity at face ((i+0.5)*h, j*h), j in 0..=ny.
    v: Vec<f64>,
    u_active: Vec<bool>,
    v_active: Vec<bool>,
    accel_u_prev: Vec<f64>,
    accel_v_prev: Vec<f64>,
    matrix: StencilMatrix,
    anchor: usize,
    steps_taken: usize,
    /// Set once `step_rhs` has produced an uncorrected intermediate field.
    awaiting_correction: bool,
}

impl FlowDriver {
    pub fn new(shape: GridShape, params: FlowParams, geometry: Geometry) -> Result<Self> {
        if !shape.is_two_d() {
            return Err(Error::Generation("flow driver supports 2D grids only".into()));
        }
        if shape.nx < 3 || shape.ny < 3 {
            return Err(Error::Generation("flow driver needs at least a 3x3 grid".into()));
        }
        if params.dt <= 0.0 || params.nu < 0.0 {
            return Err(Error::Generation("dt must be positive and nu nonnegative".into()));
        }
        let h = 1.0 / shape.ny as f64;
        // explicit diffusion stability
        let diff_number = 4.0 * params.nu * params.dt / (h * h);
        if diff_number > 1.0 {
            return Err(Error::Generation(format!(
                "explicit diffusion unstable: 4*nu*dt/h^2 = {diff_number:.3} > 1"
            )));
        }
        let fluid = match geometry {
            Geometry::Channel => vec![true; shape.n()],
            Geometry::Porous { porosity, seed } => {
                if !(porosity > 0.2 && porosity <= 1.0) {
                    return Err(Error::Generation(format!(
                        "porosity must lie in (0.2, 1], got {porosity}"
                    )));
                }
                solid_mask(shape, porosity, seed)?
            }
        };
        let anchor = fluid
            .iter()
            .position(|&f| f)
            .ok_or_else(|| Error::Generation("no fluid cells".into()))?;
        let matrix = flux_laplacian(shape, &fluid, anchor);

        let (nx, ny) = (shape.nx, shape.ny);
        let mut u_active = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let west = shape.index((i + nx - 1) % nx, j, 0);
                let east = shape.index(i, j, 0);
                u_active[i + nx * j] = fluid[west] && fluid[east];
            }
        }
        let mut v_active = vec![false; nx * (ny + 1)];
        for j in 1..ny {
            for i in 0..nx {
                let south = shape.index(i, j - 1, 0);
                let north = shape.index(i, j, 0);
                v_active[i + nx * j] = fluid[south] && fluid[north];
            }
        }

        let mut driver = FlowDriver {
            shape,
            h,
            params,
            geometry,
            fluid,
            u: vec![0.0; nx * ny],
            v: vec![0.0; nx * (ny + 1)],
            u_active,
            v_active,
            accel_u_prev: vec![0.0; nx * ny],
            accel_v_prev: vec![0.0; nx * (ny + 1)],
            matrix,
            anchor,
            steps_taken: 0,
            awaiting_correction: false,
        };
        driver.seed_perturbation();
        Ok(driver)
    }

    /// Divergence-free velocity perturbation from a seeded streamfunction on
    /// cell corners (zero along the walls so v vanishes there).
    fn seed_perturbation(&mut self) {
        if self.params.perturbation == 0.0 {
            return;
        }
        let (nx, ny) = (self.shape.nx, self.shape.ny);
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let amp = self.params.perturbation * self.h;
        let mut psi = vec![0.0; nx * (ny + 1)];
        for j in 1..ny {
            for i in 0..nx {
                psi[i + nx * j] = amp * (rng.gen::<f64>() * 2.0 - 1.0);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                if self.u_active[i + nx * j] {
                    self.u[i + nx * j] = (psi[i + nx * (j + 1)] - psi[i + nx * j]) / self.h;
                }
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                if self.v_active[i + nx * j] {
                    let ip = (i + 1) % nx;
                    self.v[i + nx * j] = -(psi[ip + nx * j] - psi[i + nx * j]) / self.h;
                }
            }
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn matrix(&self) -> &StencilMatrix {
        &self.matrix
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    fn uidx(&self, i: usize, j: usize) -> usize {
        i + self.shape.nx * j
    }

    fn u_at(&self, i: i64, j: i64) -> f64 {
        let nx = self.shape.nx as i64;
        let ny = self.shape.ny as i64;
        let iw = ((i % nx) + nx) % nx;
        if j < 0 {
            // no-slip wall below the first row of u faces
            return -self.u[self.uidx(iw as usize, 0)];
        }
        if j >= ny {
            return -self.u[self.uidx(iw as usize, (ny - 1) as usize)];
        }
        self.u[self.uidx(iw as usize, j as usize)]
    }

    fn v_at(&self, i: i64, j: i64) -> f64 {
        let nx = self.shape.nx as i64;
        let ny = self.shape.ny as i64;
        let iw = ((i % nx) + nx) % nx;
        if !(0..=ny).contains(&j) {
            return 0.0;
        }
        self.v[self.uidx(iw as usize, j as usize)]
    }

    /// Advance the predictor and return the pressure right-hand side
    /// b = -(h^2 / dt) * div(u~), with the anchor entry pinned to zero.
    /// Call [`FlowDriver::apply_pressure`] with a solve of
    /// `matrix() * p = b` to complete the step.
    pub fn step_rhs(&mut self) -> Result<Vec<f64>> {
        assert!(
            !self.awaiting_correction,
            "apply_pressure must run before the next step_rhs"
        );
        let (nx, ny) = (self.shape.nx, self.shape.ny);
        let h = self.h;
        let dt = self.params.dt;

        // advective CFL on the pre-step field
        let mut vmax = 0.0f64;
        for (idx, &active) in self.u_active.iter().enumerate() {
            if active {
                vmax = vmax.max(self.u[idx].abs());
            }
        }
        for (idx, &active) in self.v_active.iter().enumerate() {
            if active {
                vmax = vmax.max(self.v[idx].abs());
            }
        }
        let cfl = vmax * dt / h;
        if cfl > 1.0 {
            return Err(Error::CflViolation {
                step: self.steps_taken + 1,
                cfl,
            });
        }

        let nu = self.params.nu;
        let mut accel_u = vec![0.0; self.u.len()];
        for j in 0..ny {
            for i in 0..nx {
                if !self.u_active[self.uidx(i, j)] {
                    continue;
                }
                let (ii, jj) = (i as i64, j as i64);
                let uc = self.u_at(ii, jj);
                let vbar = 0.25
                    * (self.v_at(ii - 1, jj)
                        + self.v_at(ii, jj)
                        + self.v_at(ii - 1, jj + 1)
                        + self.v_at(ii, jj + 1));
                let dudx = if uc > 0.0 {
                    (uc - self.u_at(ii - 1, jj)) / h
                } else {
                    (self.u_at(ii + 1, jj) - uc) / h
                };
                let dudy = if vbar > 0.0 {
                    (uc - self.u_at(ii, jj - 1)) / h
                } else {
                    (self.u_at(ii, jj + 1) - uc) / h
                };
                let lap = (self.u_at(ii - 1, jj) + self.u_at(ii + 1, jj)
                    + self.u_at(ii, jj - 1)
                    + self.u_at(ii, jj + 1)
                    - 4.0 * uc)
                    / (h * h);
                accel_u[self.uidx(i, j)] = -(uc * dudx + vbar * dudy) + nu * lap + self.params.forcing;
            }
        }
        let mut accel_v = vec![0.0; self.v.len()];
        for j in 1..ny {
            for i in 0..nx {
                if !self.v_active[self.uidx(i, j)] {
                    continue;
                }
                let (ii, jj) = (i as i64, j as i64);
                let vc = self.v_at(ii, jj);
                let ubar = 0.25
                    * (self.u_at(ii, jj - 1)
                        + self.u_at(ii + 1, jj - 1)
                        + self.u_at(ii, jj)
                        + self.u_at(ii + 1, jj));
                let dvdx = if ubar > 0.0 {
                    (vc - self.v_at(ii - 1, jj)) / h
                } else {
                    (self.v_at(ii + 1, jj) - vc) / h
                };
                let dvdy = if vc > 0.0 {
                    (vc - self.v_at(ii, jj - 1)) / h
                } else {
                    (self.v_at(ii, jj + 1) - vc) / h
                };
                let lap = (self.v_at(ii - 1, jj) + self.v_at(ii + 1, jj)
                    + self.v_at(ii, jj - 1)
                    + self.v_at(ii, jj + 1)
                    - 4.0 * vc)
                    / (h * h);
                accel_v[self.uidx(i, j)] = -(ubar * dvdx + vc * dvdy) + nu * lap;
            }
        }

        // Adams-Bashforth step into the intermediate field (Euler first step)
        let (wa, wb) = if self.steps_taken == 0 { (1.0, 0.0) } else { (1.5, -0.5) };
        for (idx, &active) in self.u_active.iter().enumerate() {
            if active {
                self.u[idx] += dt * (wa * accel_u[idx] + wb * self.accel_u_prev[idx]);
            }
        }
        for (idx, &active) in self.v_active.iter().enumerate() {
            if active {
                self.v[idx] += dt * (wa * accel_v[idx] + wb * self.accel_v_prev[idx]);
            }
        }
        self.accel_u_prev = accel_u;
        self.accel_v_prev = accel_v;
        self.awaiting_correction = true;

        let div = self.divergence();
        let mut b = vec![0.0; self.shape.n()];
        for c in 0..self.shape.n() {
            if self.fluid[c] && c != self.anchor {
                b[c] = -(h * h / dt) * div[c];
            }
        }
        Ok(b)
    }

    /// Discrete divergence of the current velocity field per cell.
    pub fn divergence(&self) -> Vec<f64> {
        let (nx, ny) = (self.shape.nx, self.shape.ny);
        let mut div = vec![0.0; self.shape.n()];
        for j in 0..ny {
            for i in 0..nx {
                let c = self.shape.index(i, j, 0);
                if !self.fluid[c] {
                    continue;
                }
                let ue = self.u[self.uidx((i + 1) % nx, j)];
                let uw = self.u[self.uidx(i, j)];
                let vn = self.v[self.uidx(i, j + 1)];
                let vs = self.v[self.uidx(i, j)];
                div[c] = (ue - uw + vn - vs) / self.h;
            }
        }
        div
    }

    pub fn divergence_norm(&self) -> f64 {
        norm2(&self.divergence())
    }

    /// Correct the intermediate velocities with the supplied pressure,
    /// completing the step.
    pub fn apply_pressure(&mut self, p: &[f64]) {
        assert!(self.awaiting_correction, "call step_rhs first");
        assert_eq!(p.len(), self.shape.n());
        let (nx, ny) = (self.shape.nx, self.shape.ny);
        let scale = self.params.dt / self.h;
        for j in 0..ny {
            for i in 0..nx {
                let idx = self.uidx(i, j);
                if self.u_active[idx] {
                    let east = self.shape.index(i, j, 0);
                    let west = self.shape.index((i + nx - 1) % nx, j, 0);
                    self.u[idx] -= scale * (p[east] - p[west]);
                }
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let idx = self.uidx(i, j);
                if self.v_active[idx] {
                    let north = self.shape.index(i, j, 0);
                    let south = self.shape.index(i, j - 1, 0);
                    self.v[idx] -= scale * (p[north] - p[south]);
                }
            }
        }
        self.awaiting_correction = false;
        self.steps_taken += 1;
    }

    /// Solve the pressure system with the internal reference solver and
    /// complete the step. Returns (b, p).
    pub fn step_with_reference_solve(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = self.step_rhs()?;
        let p = self.reference_pressure_solve(&b)?;
        self.apply_pressure(&p);
        Ok((b, p))
    }

    pub fn reference_pressure_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let spec = PreconditionerSpec::jacobi();
        let op = PreconditionedOp::from_matrix(&self.matrix, &spec)?;
        let bp = op.precondition_rhs(b);
        let cfg = SolverConfig::default()
            .with_tol(self.params.pressure_tol, TolMode::Relative)
            .with_restart(40)
            .with_max_matvecs(200_000);
        let (p, rep) = gmres_m(&op, &bp, &vec![0.0; self.matrix.n()], &cfg)?;
        if rep.status != crate::report::SolveStatus::Converged {
            return Err(Error::Generation(format!(
                "internal pressure solve failed at step {}: {}",
                self.steps_taken + 1,
                rep.status.name()
            )));
        }
        Ok(p)
    }
}

/// Generate a fixed-matrix pressure-Poisson sequence by running the driver
/// `steps` times with the internal reference pressure solve.
pub fn fractional_step_sequence(
    shape: GridShape,
    steps: usize,
    params: FlowParams,
    geometry: Geometry,
) -> Result<SystemSequence> {
    let mut driver = FlowDriver::new(shape, params, geometry)?;
    let mut rhs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (b, _) = driver.step_with_reference_solve()?;
        rhs.push(b);
    }
    let mut meta = SequenceMeta {
        generator: "fractional_step".into(),
        seed: params.seed,
        ..Default::default()
    };
    meta.push("steps", steps);
    meta.push("dt", params.dt);
    meta.push("nu", params.nu);
    meta.push("forcing", params.forcing);
    meta.push("perturbation", params.perturbation);
    meta.push("pressure_tol", params.pressure_tol);
    meta.push("geometry", geometry.name());
    if let Geometry::Porous { porosity, seed } = geometry {
        meta.push("porosity", porosity);
        meta.push("porous_seed", seed);
    }
    meta.push("anchor", driver.anchor());
    Ok(SystemSequence {
        matrix: driver.matrix.clone(),
        rhs,
        matrix_epoch: 0,
        meta,
    })
}
