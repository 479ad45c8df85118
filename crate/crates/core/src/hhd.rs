//! Helmholtz-Hodge decomposition on the MAC grid.
//!
//! A velocity `U` splits into a gradient part `∇P` (P on cells), a curl part
//! `∇×ψ` (ψ on nodes) and a harmonic remainder `H`. The stencils are chosen so
//! that the discrete divergence of a discrete curl telescopes to zero and the
//! discrete vorticity of a discrete curl is exactly the negated node
//! Laplacian; stream-function extraction from a curl field is therefore exact
//! up to the CG tolerance.

use serde::Serialize;

use crate::error::Result;
use crate::fields::{Grid, MacVelocity, ScalarField, Siting};
use crate::poisson::{self, SolveStats, SolverOptions};

/// Scalar vorticity `∂v/∂x − ∂u/∂y` at interior nodes; boundary nodes are 0.
pub fn vorticity(vel: &MacVelocity) -> ScalarField {
    let Grid { nx, ny, dx } = vel.grid;
    let mut w = ScalarField::zeros(vel.grid, Siting::Node);
    for j in 1..ny {
        for i in 1..nx {
            let value = (vel.v_at(i, j) - vel.v_at(i - 1, j) - vel.u_at(i, j) + vel.u_at(i, j - 1)) / dx;
            w.set(i, j, value);
        }
    }
    w
}

/// Solves `−∇²ψ = ω` with `ψ = 0` on the whole boundary.
pub fn stream_function(vel: &MacVelocity, opts: &SolverOptions) -> Result<(ScalarField, SolveStats)> {
    poisson::solve_dirichlet_node(&vorticity(vel), opts)
}

/// `u = ∂ψ/∂y`, `v = −∂ψ/∂x`, differenced along each face.
pub fn curl_velocity(psi: &ScalarField) -> MacVelocity {
    debug_assert_eq!(psi.siting, Siting::Node);
    let grid = psi.grid;
    let Grid { nx, ny, dx } = grid;
    let mut vel = MacVelocity::zeros(grid);
    for j in 0..ny {
        for i in 0..=nx {
            let k = vel.u_idx(i, j);
            vel.u[k] = (psi.at(i, j + 1) - psi.at(i, j)) / dx;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let k = vel.v_idx(i, j);
            vel.v[k] = -(psi.at(i + 1, j) - psi.at(i, j)) / dx;
        }
    }
    vel
}

/// Gradient of a cell scalar on interior faces; wall faces are zero.
pub fn gradient(p: &ScalarField) -> MacVelocity {
    debug_assert_eq!(p.siting, Siting::Cell);
    let Grid { nx, ny, dx } = p.grid;
    let mut vel = MacVelocity::zeros(p.grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = vel.u_idx(i, j);
            vel.u[k] = (p.at(i, j) - p.at(i - 1, j)) / dx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = vel.v_idx(i, j);
            vel.v[k] = (p.at(i, j) - p.at(i, j - 1)) / dx;
        }
    }
    vel
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub psi: ScalarField,
    pub grad_potential: ScalarField,
    pub curl_part: MacVelocity,
    pub grad_part: MacVelocity,
    pub harmonic: MacVelocity,
    /// `‖H‖₂ / max(‖U‖₂, ε)`.
    pub residual_norm: f64,
    pub psi_stats: SolveStats,
    pub potential_stats: SolveStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionSummary {
    pub residual_norm: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    pub potential_l2: f64,
    pub curl_l2: f64,
    pub grad_l2: f64,
    pub harmonic_l2: f64,
    pub psi_converged: bool,
    pub potential_converged: bool,
}

impl Decomposition {
    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            residual_norm: self.residual_norm,
            psi_min: self.psi.min(),
            psi_max: self.psi.max(),
            potential_l2: self.grad_potential.norm_l2(),
            curl_l2: self.curl_part.norm_l2(),
            grad_l2: self.grad_part.norm_l2(),
            harmonic_l2: self.harmonic.norm_l2(),
            psi_converged: self.psi_stats.converged,
            potential_converged: self.potential_stats.converged,
        }
    }
}

/// Splits `vel` into `∇P + ∇×ψ + H`, with `H` defined as the remainder so the
/// three parts always sum back to the input.
pub fn decompose(vel: &MacVelocity, opts: &SolverOptions) -> Result<Decomposition> {
    // ∇²P = ∇·U, i.e. (−∇²)P = −∇·U.
    let mut rhs = vel.divergence();
    rhs.data.iter_mut().for_each(|d| *d = -*d);
    let (grad_potential, potential_stats) = poisson::solve_neumann_cell(&rhs, opts)?;
    let grad_part = gradient(&grad_potential);

    let (psi, psi_stats) = stream_function(vel, opts)?;
    let curl_part = curl_velocity(&psi);

    let harmonic = vel.sub(&grad_part).sub(&curl_part);
    let residual_norm = harmonic.norm_l2() / vel.norm_l2().max(f64::MIN_POSITIVE);
    Ok(Decomposition { psi, grad_potential, curl_part, grad_part, harmonic, residual_norm, psi_stats, potential_stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Vec2;
    use crate::poisson::neg_laplacian_node;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_psi(grid: Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::zeros(grid, Siting::Node);
        for j in 1..grid.ny {
            for i in 1..grid.nx {
                f.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        f
    }

    fn sin_psi(grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, Siting::Node, |p| (PI * p.x).sin() * (PI * p.y).sin())
    }

    fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
        let d: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / b.norm_l2()
    }

    #[test]
    fn vorticity_of_simple_fields() {
        let g = Grid::unit(16, 16).unwrap();
        assert!(vorticity(&MacVelocity::zeros(g)).data.iter().all(|&w| w == 0.0));
        let w = vorticity(&MacVelocity::uniform(g, 0.3, -1.2));
        assert!(w.data.iter().all(|&w| w.abs() < 1e-12));
    }

    #[test]
    fn vorticity_of_curl_is_negated_laplacian() {
        let g = Grid::unit(20, 14).unwrap();
        let psi = random_psi(g, 5);
        let w = vorticity(&curl_velocity(&psi));
        let lap = neg_laplacian_node(&psi);
        let scale = lap.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in w.data.iter().zip(&lap.data) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn curl_is_divergence_free_and_no_flux() {
        let g = Grid::unit(32, 32).unwrap();
        let vel = curl_velocity(&random_psi(g, 9));
        assert!(vel.max_abs_divergence() <= 1e-12 * vel.max_abs() / g.dx);
        assert_eq!(vel.max_boundary_normal(), 0.0);
        let c = curl_velocity(&ScalarField::constant(g, Siting::Node, 4.2));
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn curl_of_sine_matches_analytic() {
        let g = Grid::unit(64, 64).unwrap();
        let vel = curl_velocity(&sin_psi(g));
        let s = vel.sample(Vec2::new(0.25, 0.25)).unwrap();
        // Exact value is (π/2, −π/2); first-order error from one-sided sampling.
        assert!((s.x - PI / 2.0).abs() < 2.0 * g.dx, "{s:?}");
        assert!((s.y + PI / 2.0).abs() < 2.0 * g.dx, "{s:?}");
        let c = vel.sample(Vec2::new(0.5, 0.5)).unwrap();
        assert!(c.x.abs() < 1e-3 && c.y.abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn stream_function_round_trip() {
        let g = Grid::unit(64, 64).unwrap();
        let psi0 = sin_psi(g);
        let (psi, stats) = stream_function(&curl_velocity(&psi0), &SolverOptions::with_tol(1e-10)).unwrap();
        assert!(stats.converged);
        assert!(rel_l2(&psi, &psi0) <= 1e-6);
        let (zero, _) = stream_function(&MacVelocity::zeros(g), &SolverOptions::default()).unwrap();
        assert!(zero.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stream_function_scales_linearly() {
        let g = Grid::unit(24, 24).unwrap();
        let tol = 1e-10;
        let psi0 = random_psi(g, 2);
        let vel = curl_velocity(&psi0);
        let (a, _) = stream_function(&vel, &SolverOptions::with_tol(tol)).unwrap();
        let (b, _) = stream_function(&vel.scaled(2.0), &SolverOptions::with_tol(tol)).unwrap();
        assert!(rel_l2(&b, &a.scaled(2.0)) <= 10.0 * tol);
    }

    #[test]
    fn decompose_curl_field() {
        let g = Grid::unit(32, 32).unwrap();
        let vel = curl_velocity(&random_psi(g, 4));
        let d = decompose(&vel, &SolverOptions::default()).unwrap();
        assert!(d.residual_norm <= 1e-6, "{}", d.residual_norm);
        assert!(d.grad_potential.norm_l2() <= 1e-6 * vel.norm_l2());
    }

    #[test]
    fn decompose_gradient_field() {
        let g = Grid::unit(24, 24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let phi = ScalarField {
            grid: g,
            siting: Siting::Cell,
            data: (0..g.cell_count()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let vel = gradient(&phi);
        let d = decompose(&vel, &SolverOptions::default()).unwrap();
        assert!(d.curl_part.norm_l2() <= 1e-8 * vel.norm_l2());
        let back = d.grad_part.add(&d.harmonic).add(&d.curl_part);
        for (a, b) in back.u.iter().chain(&back.v).zip(vel.u.iter().chain(&vel.v)) {
            assert!((a - b).abs() <= 1e-12 * vel.max_abs());
        }
        assert!(d.harmonic.norm_l2() <= 1e-8 * vel.norm_l2());
    }

    #[test]
    fn decompose_zero() {
        let g = Grid::unit(8, 8).unwrap();
        let d = decompose(&MacVelocity::zeros(g), &SolverOptions::default()).unwrap();
        assert_eq!(d.psi.norm_l2(), 0.0);
        assert_eq!(d.grad_potential.norm_l2(), 0.0);
        assert_eq!(d.harmonic.norm_l2(), 0.0);
        assert_eq!(d.residual_norm, 0.0);
    }
}
