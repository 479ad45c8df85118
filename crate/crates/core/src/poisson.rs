//! Conjugate-gradient Poisson solves on the 5-point Laplacian.
//!
//! Two boundary variants share one CG kernel:
//!
//! * [`solve_dirichlet_node`] works on node fields with every boundary node
//!   pinned to zero. This is the stream-function solve.
//! * [`solve_neumann_cell`] works on cell fields with zero normal gradient at
//!   the walls. This is the pressure solve. The operator is singular (constants
//!   are in its null space), so the right-hand side is shifted to zero mean and
//!   the solution is returned with zero mean.
//!
//! Both solve `A x = b` with `A` the *negated* Laplacian, which is symmetric
//! positive (semi-)definite. All inner products are accumulated sequentially in
//! ascending unknown index, so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, Siting};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual target, `‖b − A x‖₂ / ‖b‖₂`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 · nx · ny`.
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self::with_tol(DEFAULT_TOL)
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_iter: None, preconditioner: Preconditioner::None }
    }

    pub fn max_iter_for(&self, grid: &Grid) -> usize {
        self.max_iter.unwrap_or(10 * grid.nx * grid.ny)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("solver tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Relative residual of the returned iterate after each iteration,
    /// starting with the initial guess.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

/// A symmetric positive (semi-)definite operator on flat vectors.
pub(crate) trait SpdOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn remove_mean(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

/// Preconditioned CG from a zero initial guess.
///
/// Returns the iterate with the smallest residual seen, so the reported
/// residual history never increases. When the recurrence residual reaches
/// `tol` the true residual is recomputed; if it is still above `tol` the
/// recurrence restarts from it.
pub(crate) fn conjugate_gradient(
    op: &impl SpdOperator,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    preconditioner: Preconditioner,
    zero_mean: bool,
) -> (Vec<f64>, SolveStats) {
    let n = op.len();
    debug_assert_eq!(b.len(), n);
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return (
            x,
            SolveStats { iterations: 0, final_residual: 0.0, converged: true, residual_history: vec![0.0] },
        );
    }

    let inv_diag: Option<Vec<f64>> = match preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(
            op.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect(),
        ),
    };
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z.iter_mut().zip(r).zip(inv).for_each(|((z, r), m)| *z = r * m),
        None => z.copy_from_slice(r),
    };

    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    let mut best = x.clone();
    let mut best_res = 1.0;
    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        iterations += 1;
        let mut res = dot(&r, &r).sqrt() / b_norm;

        if res <= tol {
            // Guard against drift between the recurrence and the true residual.
            op.apply(&x, &mut ap);
            for k in 0..n {
                r[k] = b[k] - ap[k];
            }
            if zero_mean {
                remove_mean(&mut r);
            }
            res = dot(&r, &r).sqrt() / b_norm;
            if res <= tol {
                best.copy_from_slice(&x);
                best_res = res;
                history.push(best_res);
                converged = true;
                break;
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        } else {
            precondition(&r, &mut z);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }

        if res < best_res {
            best_res = res;
            best.copy_from_slice(&x);
        }
        history.push(best_res);
    }

    if zero_mean {
        remove_mean(&mut best);
    }
    let stats = SolveStats { iterations, final_residual: best_res, converged, residual_history: history };
    (best, stats)
}

/// Negated Dirichlet Laplacian over interior nodes.
pub(crate) struct DirichletNodeLaplacian {
    nx: usize,
    ny: usize,
    inv_dx2: f64,
}

impl DirichletNodeLaplacian {
    pub(crate) fn new(grid: &Grid) -> Self {
        Self { nx: grid.nx, ny: grid.ny, inv_dx2: 1.0 / (grid.dx * grid.dx) }
    }

    /// Interior unknowns per row.
    fn w(&self) -> usize {
        self.nx - 1
    }

    pub(crate) fn gather(&self, field: &ScalarField) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 1..self.ny {
            for i in 1..self.nx {
                out.push(field.at(i, j));
            }
        }
        out
    }

    pub(crate) fn scatter(&self, grid: Grid, x: &[f64]) -> ScalarField {
        let mut f = ScalarField::zeros(grid, Siting::Node);
        let w = self.w();
        for j in 1..self.ny {
            for i in 1..self.nx {
                f.set(i, j, x[(j - 1) * w + (i - 1)]);
            }
        }
        f
    }
}

impl SpdOperator for DirichletNodeLaplacian {
    fn len(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let w = self.w();
        let h = self.ny - 1;
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                let mut s = 4.0 * x[k];
                if i > 0 {
                    s -= x[k - 1];
                }
                if i + 1 < w {
                    s -= x[k + 1];
                }
                if j > 0 {
                    s -= x[k - w];
                }
                if j + 1 < h {
                    s -= x[k + w];
                }
                out[k] = s * self.inv_dx2;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        vec![4.0 * self.inv_dx2; self.len()]
    }
}

/// Negated Neumann Laplacian over cells.
pub(crate) struct NeumannCellLaplacian {
    nx: usize,
    ny: usize,
    inv_dx2: f64,
}

impl NeumannCellLaplacian {
    pub(crate) fn new(grid: &Grid) -> Self {
        Self { nx: grid.nx, ny: grid.ny, inv_dx2: 1.0 / (grid.dx * grid.dx) }
    }
}

impl SpdOperator for NeumannCellLaplacian {
    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.nx, self.ny);
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                let mut s = 0.0;
                if i > 0 {
                    s += x[k] - x[k - 1];
                }
                if i + 1 < w {
                    s += x[k] - x[k + 1];
                }
                if j > 0 {
                    s += x[k] - x[k - w];
                }
                if j + 1 < h {
                    s += x[k] - x[k + w];
                }
                out[k] = s * self.inv_dx2;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let (w, h) = (self.nx, self.ny);
        let mut d = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let count = [i > 0, i + 1 < w, j > 0, j + 1 < h].iter().filter(|&&b| b).count();
                d.push(count as f64 * self.inv_dx2);
            }
        }
        d
    }
}

/// Solves `−∇²x = rhs` on interior nodes with `x = 0` on the boundary.
/// Boundary entries of `rhs` are ignored.
pub fn solve_dirichlet_node(rhs: &ScalarField, opts: &SolverOptions) -> Result<(ScalarField, SolveStats)> {
    opts.validate()?;
    if rhs.siting != Siting::Node {
        return Err(Error::KindMismatch { expected: "node scalar".into(), found: "cell scalar".into() });
    }
    let op = DirichletNodeLaplacian::new(&rhs.grid);
    let b = op.gather(rhs);
    let (x, stats) =
        conjugate_gradient(&op, &b, opts.tol, opts.max_iter_for(&rhs.grid), opts.preconditioner, false);
    Ok((op.scatter(rhs.grid, &x), stats))
}

/// Solves `−∇²x = rhs − mean(rhs)` on cells with zero-flux walls, returning
/// the zero-mean solution.
pub fn solve_neumann_cell(rhs: &ScalarField, opts: &SolverOptions) -> Result<(ScalarField, SolveStats)> {
    opts.validate()?;
    if rhs.siting != Siting::Cell {
        return Err(Error::KindMismatch { expected: "cell scalar".into(), found: "node scalar".into() });
    }
    let op = NeumannCellLaplacian::new(&rhs.grid);
    let mut b = rhs.data.clone();
    remove_mean(&mut b);
    // A constant right-hand side leaves rounding residue after the shift.
    let scale = rhs.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if b.iter().all(|x| x.abs() <= 8.0 * f64::EPSILON * scale) {
        b.iter_mut().for_each(|x| *x = 0.0);
    }
    let (x, stats) =
        conjugate_gradient(&op, &b, opts.tol, opts.max_iter_for(&rhs.grid), opts.preconditioner, true);
    Ok((ScalarField { grid: rhs.grid, siting: Siting::Cell, data: x }, stats))
}

/// Applies the negated 5-point node Laplacian at interior nodes (boundary
/// outputs are zero, boundary inputs are read as given).
pub fn neg_laplacian_node(f: &ScalarField) -> ScalarField {
    let Grid { nx, ny, dx } = f.grid;
    let mut out = ScalarField::zeros(f.grid, Siting::Node);
    for j in 1..ny {
        for i in 1..nx {
            let v = 4.0 * f.at(i, j) - f.at(i - 1, j) - f.at(i + 1, j) - f.at(i, j - 1) - f.at(i, j + 1);
            out.set(i, j, v / (dx * dx));
        }
    }
    out
}
