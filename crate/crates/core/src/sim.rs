//! Inviscid incompressible smoke on the MAC grid.
//!
//! One step runs: emit density, add external and guidance forces, advect
//! velocity, project, advect density. Advection is semi-Lagrangian with a
//! midpoint backtrace; projection solves a Neumann pressure Poisson problem so
//! the wall faces stay exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, Lattice, MacVelocity, ScalarField, Siting, Vec2};
use crate::hhd::gradient;
use crate::poisson::{self, SolveStats, SolverOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceMode {
    Global,
    #[default]
    Density,
}

/// Circular density source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    /// Density added per unit time, clamped at 1.
    pub rate: f64,
}

impl Default for Emitter {
    fn default() -> Self {
        Self { x: 0.5, y: 0.15, r: 0.08, rate: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub rho: f64,
    pub f_e: Vec2,
    pub force_mode: ForceMode,
    pub guidance_gain: f64,
    pub solver: SolverOptions,
    pub steps: usize,
    pub emitter: Emitter,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            rho: 1.0,
            f_e: Vec2::new(0.0, 1.0),
            force_mode: ForceMode::Density,
            guidance_gain: 5.0,
            solver: SolverOptions::default(),
            steps: 100,
            emitter: Emitter::default(),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidParams(format!("{what} = {v}"));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(bad("dt", self.dt));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(bad("rho", self.rho));
        }
        if !(self.guidance_gain.is_finite() && self.guidance_gain >= 0.0) {
            return Err(bad("guidance_gain", self.guidance_gain));
        }
        if !self.f_e.is_finite() {
            return Err(Error::InvalidParams("f_e must be finite".into()));
        }
        let e = &self.emitter;
        if !(e.x.is_finite() && e.y.is_finite() && e.r >= 0.0 && e.rate >= 0.0 && e.rate.is_finite()) {
            return Err(Error::InvalidParams("emitter needs finite center, r >= 0, rate >= 0".into()));
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(bad("tol", self.solver.tol));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// Defaults to `1/nx` (unit-width domain).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 64, ny: 64, dx: None }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid> {
        match self.dx {
            Some(dx) => Grid::new(self.nx, self.ny, dx),
            None => Grid::new(self.nx, self.ny, 1.0 / self.nx.max(1) as f64),
        }
    }
}

/// Simulation config as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub dt: f64,
    pub rho: f64,
    pub f_e: [f64; 2],
    pub force_mode: ForceMode,
    pub guidance_gain: f64,
    pub steps: usize,
    pub emitter: Emitter,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let p = SimParams::default();
        Self {
            grid: GridConfig::default(),
            dt: p.dt,
            rho: p.rho,
            f_e: p.f_e.into(),
            force_mode: p.force_mode,
            guidance_gain: p.guidance_gain,
            steps: p.steps,
            emitter: p.emitter,
            seed: 0,
            tol: p.solver.tol,
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<Grid> {
        self.grid.grid()
    }

    pub fn params(&self) -> Result<SimParams> {
        let params = SimParams {
            dt: self.dt,
            rho: self.rho,
            f_e: self.f_e.into(),
            force_mode: self.force_mode,
            guidance_gain: self.guidance_gain,
            solver: SolverOptions::with_tol(self.tol),
            steps: self.steps,
            emitter: self.emitter,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub vel: MacVelocity,
    pub density: ScalarField,
    pub pressure: ScalarField,
    pub time: f64,
    pub step_index: usize,
}

impl SimState {
    /// Fluid at rest with no smoke.
    pub fn at_rest(grid: Grid) -> Self {
        Self {
            vel: MacVelocity::zeros(grid),
            density: ScalarField::zeros(grid, Siting::Cell),
            pressure: ScalarField::zeros(grid, Siting::Cell),
            time: 0.0,
            step_index: 0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.vel.grid
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    /// `max|u|·dt/dx` after the step.
    pub cfl: f64,
    pub projection: SolveStats,
}

/// Adds `rate·dt` density inside the emitter disc, clamped at 1.
pub fn emit(density: &mut ScalarField, emitter: &Emitter, dt: f64) {
    if emitter.rate <= 0.0 || emitter.r <= 0.0 {
        return;
    }
    let grid = density.grid;
    let center = Vec2::new(emitter.x, emitter.y);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if grid.cell_center(i, j).distance(center) <= emitter.r {
                let k = density.idx(i, j);
                density.data[k] = (density.data[k] + emitter.rate * dt).min(1.0);
            }
        }
    }
}

/// `vel += dt·f_e·w(x)` and, with a target, `vel += dt·k_g·(target − vel)`.
/// Wall faces are re-zeroed afterwards.
pub fn add_forces(state: &SimState, params: &SimParams, target: Option<&MacVelocity>) -> Result<SimState> {
    let grid = state.grid();
    if let Some(t) = target {
        grid.check_same(&t.grid)?;
    }
    let mut next = state.clone();
    let dt = params.dt;
    let vel = &mut next.vel;
    let Grid { nx, ny, .. } = grid;

    if params.f_e != Vec2::ZERO {
        let density = &state.density;
        let weight = |a: Option<(usize, usize)>, b: Option<(usize, usize)>| -> f64 {
            match params.force_mode {
                ForceMode::Global => 1.0,
                ForceMode::Density => {
                    let vals: Vec<f64> = [a, b].into_iter().flatten().map(|(i, j)| density.at(i, j)).collect();
                    (vals.iter().sum::<f64>() / vals.len() as f64).clamp(0.0, 1.0)
                }
            }
        };
        if params.f_e.x != 0.0 {
            for j in 0..ny {
                for i in 0..=nx {
                    let left = (i > 0).then(|| (i - 1, j));
                    let right = (i < nx).then_some((i, j));
                    let k = vel.u_idx(i, j);
                    vel.u[k] += dt * params.f_e.x * weight(left, right);
                }
            }
        }
        if params.f_e.y != 0.0 {
            for j in 0..=ny {
                for i in 0..nx {
                    let below = (j > 0).then(|| (i, j - 1));
                    let above = (j < ny).then_some((i, j));
                    let k = vel.v_idx(i, j);
                    vel.v[k] += dt * params.f_e.y * weight(below, above);
                }
            }
        }
    }

    if let Some(target) = target {
        // A zero gain must leave the trajectory bit-identical to an unguided run.
        if params.guidance_gain > 0.0 {
            let g = dt * params.guidance_gain;
            vel.u.iter_mut().zip(&target.u).for_each(|(v, t)| *v += g * (t - *v));
            vel.v.iter_mut().zip(&target.v).for_each(|(v, t)| *v += g * (t - *v));
        }
    }

    vel.enforce_no_flux();
    Ok(next)
}

/// Midpoint backtrace from `x` through `vel` over `dt`.
fn backtrace(vel: &MacVelocity, x: Vec2, dt: f64) -> Vec2 {
    let mid = x - vel.sample_clamped(x) * (0.5 * dt);
    x - vel.sample_clamped(mid) * dt
}

/// Semi-Lagrangian transport of a cell scalar.
pub fn advect_scalar(field: &ScalarField, vel: &MacVelocity, dt: f64) -> Result<ScalarField> {
    field.grid.check_same(&vel.grid)?;
    let grid = field.grid;
    let lattice = field.lattice();
    let mut out = field.clone();
    let (w, h) = field.dims();
    for j in 0..h {
        for i in 0..w {
            let x = match field.siting {
                Siting::Cell => grid.cell_center(i, j),
                Siting::Node => grid.node_pos(i, j),
            };
            let src = backtrace(vel, x, dt);
            out.data[j * w + i] = lattice.sample(&field.data, grid.dx, src);
        }
    }
    Ok(out)
}

/// Semi-Lagrangian self-advection of the velocity; wall faces stay zero.
pub fn advect_velocity(vel: &MacVelocity, dt: f64) -> MacVelocity {
    let grid = vel.grid;
    let Grid { nx, ny, dx } = grid;
    let mut out = vel.clone();
    let (lu, lv) = (Lattice::u(&grid), Lattice::v(&grid));
    for j in 0..ny {
        for i in 0..=nx {
            let src = backtrace(vel, grid.u_pos(i, j), dt);
            let k = out.u_idx(i, j);
            out.u[k] = lu.sample(&vel.u, dx, src);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let src = backtrace(vel, grid.v_pos(i, j), dt);
            let k = out.v_idx(i, j);
            out.v[k] = lv.sample(&vel.v, dx, src);
        }
    }
    out.enforce_no_flux();
    out
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub vel: MacVelocity,
    pub pressure: ScalarField,
    pub stats: SolveStats,
}

/// Zeroes wall-normal faces, then removes the divergent part: solves
/// `∇²q = (ρ/dt)·∇·u` and sets `u −= (dt/ρ)·∇q` on interior faces.
pub fn project(vel: &MacVelocity, params: &SimParams) -> Result<Projection> {
    let scale = params.rho / params.dt;
    let mut out = vel.clone();
    out.enforce_no_flux();
    let mut rhs = out.divergence();
    rhs.data.iter_mut().for_each(|d| *d *= -scale);
    let (pressure, stats) = poisson::solve_neumann_cell(&rhs, &params.solver)?;
    if !stats.converged {
        return Err(Error::ProjectionFailed(stats));
    }
    let grad = gradient(&pressure);
    let k = params.dt / params.rho;
    out.u.iter_mut().zip(&grad.u).for_each(|(u, g)| *u -= k * g);
    out.v.iter_mut().zip(&grad.v).for_each(|(v, g)| *v -= k * g);
    Ok(Projection { vel: out, pressure, stats })
}

/// One full step: emit, force, advect velocity, project, advect density.
pub fn step(state: &SimState, params: &SimParams, target: Option<&MacVelocity>) -> Result<(SimState, StepReport)> {
    let mut s = state.clone();
    emit(&mut s.density, &params.emitter, params.dt);
    let s = add_forces(&s, params, target)?;
    let advected = advect_velocity(&s.vel, params.dt);
    let Projection { vel, pressure, stats } = project(&advected, params)?;
    let density = advect_scalar(&s.density, &vel, params.dt)?;
    let cfl = vel.max_abs() * params.dt / vel.grid.dx;
    let next = SimState { vel, density, pressure, time: s.time + params.dt, step_index: s.step_index + 1 };
    Ok((next, StepReport { cfl, projection: stats }))
}

/// Runs `steps` steps, calling `observe` after each one.
pub fn run(
    state: &SimState,
    params: &SimParams,
    target: Option<&MacVelocity>,
    steps: usize,
    mut observe: impl FnMut(&SimState, &StepReport),
) -> Result<SimState> {
    let mut s = state.clone();
    for _ in 0..steps {
        let (next, report) = step(&s, params, target)?;
        observe(&next, &report);
        log::trace!("step {} cfl {:.3}", next.step_index, report.cfl);
        s = next;
    }
    Ok(s)
}
