//! Grid geometry, field containers and bilinear sampling.
//!
//! All fields live on a uniform grid of square cells covering
//! `[0, nx·dx] × [0, ny·dx]`. Scalars sit either on cell corners (nodes) or
//! cell centers; velocity uses the MAC arrangement with the x-component on
//! vertical faces and the y-component on horizontal faces:
//!
//! ```text
//!   node(i,j+1) ---- v(i,j+1) ---- node(i+1,j+1)
//!        |                              |
//!     u(i,j)        cell(i,j)       u(i+1,j)
//!        |                              |
//!   node(i,j) ------ v(i,j) ------ node(i+1,j)
//! ```
//!
//! Storage is row-major with `j` as the slow index throughout.

mod io;
mod vec2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_field, write_field, FIELD_MAGIC, FIELD_VERSION, HEADER_LEN};
pub use vec2::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 cells, got {nx}x{ny}"
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        Ok(Self { nx, ny, dx })
    }

    /// Square cells sized so that the x extent is 1.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 1.0 / nx as f64)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.nx, self.ny, self.dx).map(|_| ())
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.dx
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width() && p.y >= 0.0 && p.y <= self.height()
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn u_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn v_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn node_pos(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.dx, j as f64 * self.dx)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dx)
    }

    pub fn u_pos(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64 * self.dx, (j as f64 + 0.5) * self.dx)
    }

    pub fn v_pos(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new((i as f64 + 0.5) * self.dx, j as f64 * self.dx)
    }

    pub(crate) fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{} (dx={})", self.nx, self.ny, self.dx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Siting {
    Node,
    Cell,
}

/// A regular lattice of sample sites, described in grid-index units.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Lattice {
    /// Position of site (0,0) in units of dx.
    ox: f64,
    oy: f64,
    w: usize,
    h: usize,
}

impl Lattice {
    pub(crate) fn node(grid: &Grid) -> Self {
        Self { ox: 0.0, oy: 0.0, w: grid.nx + 1, h: grid.ny + 1 }
    }

    pub(crate) fn cell(grid: &Grid) -> Self {
        Self { ox: 0.5, oy: 0.5, w: grid.nx, h: grid.ny }
    }

    pub(crate) fn u(grid: &Grid) -> Self {
        Self { ox: 0.0, oy: 0.5, w: grid.nx + 1, h: grid.ny }
    }

    pub(crate) fn v(grid: &Grid) -> Self {
        Self { ox: 0.5, oy: 0.0, w: grid.nx, h: grid.ny + 1 }
    }

    /// Bilinear stencil at `p`: base site and fractional offsets, with the
    /// position clamped into the lattice rectangle.
    pub(crate) fn locate(&self, dx: f64, p: Vec2) -> (usize, usize, f64, f64) {
        let gx = (p.x / dx - self.ox).clamp(0.0, (self.w - 1) as f64);
        let gy = (p.y / dx - self.oy).clamp(0.0, (self.h - 1) as f64);
        let i = (gx.floor() as usize).min(self.w.saturating_sub(2));
        let j = (gy.floor() as usize).min(self.h.saturating_sub(2));
        (i, j, gx - i as f64, gy - j as f64)
    }

    pub(crate) fn sample(&self, data: &[f64], dx: f64, p: Vec2) -> f64 {
        let (i, j, fx, fy) = self.locate(dx, p);
        let w = self.w;
        let a = data[j * w + i];
        let b = data[j * w + i + 1];
        let c = data[(j + 1) * w + i];
        let d = data[(j + 1) * w + i + 1];
        let bottom = a + fx * (b - a);
        let top = c + fx * (d - c);
        let value = bottom + fy * (top - bottom);
        // Rounding can push a convex combination one ulp past its corners.
        let lo = a.min(b).min(c).min(d);
        let hi = a.max(b).max(c).max(d);
        value.clamp(lo, hi)
    }
}

fn check_position(p: Vec2) -> Result<()> {
    if p.x.is_finite() && p.y.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPosition(p.x, p.y))
    }
}

fn check_finite(what: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub siting: Siting,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid, siting: Siting) -> Self {
        Self::constant(grid, siting, 0.0)
    }

    pub fn constant(grid: Grid, siting: Siting, value: f64) -> Self {
        let len = Self::expected_len(&grid, siting);
        Self { grid, siting, data: vec![value; len] }
    }

    pub fn from_data(grid: Grid, siting: Siting, data: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let len = Self::expected_len(&grid, siting);
        if data.len() != len {
            return Err(Error::DimensionMismatch {
                expected: format!("{len} values"),
                found: format!("{} values", data.len()),
            });
        }
        check_finite("scalar field", &data)?;
        Ok(Self { grid, siting, data })
    }

    /// Evaluates `f` at every site position.
    pub fn from_fn(grid: Grid, siting: Siting, f: impl Fn(Vec2) -> f64) -> Self {
        let (w, h) = Self::dims_of(&grid, siting);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let p = match siting {
                    Siting::Node => grid.node_pos(i, j),
                    Siting::Cell => grid.cell_center(i, j),
                };
                data.push(f(p));
            }
        }
        Self { grid, siting, data }
    }

    pub fn expected_len(grid: &Grid, siting: Siting) -> usize {
        match siting {
            Siting::Node => grid.node_count(),
            Siting::Cell => grid.cell_count(),
        }
    }

    fn dims_of(grid: &Grid, siting: Siting) -> (usize, usize) {
        match siting {
            Siting::Node => (grid.nx + 1, grid.ny + 1),
            Siting::Cell => (grid.nx, grid.ny),
        }
    }

    /// Site counts along x and y.
    pub fn dims(&self) -> (usize, usize) {
        Self::dims_of(&self.grid, self.siting)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.dims().0 + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    pub(crate) fn lattice(&self) -> Lattice {
        match self.siting {
            Siting::Node => Lattice::node(&self.grid),
            Siting::Cell => Lattice::cell(&self.grid),
        }
    }

    /// Bilinear interpolation at `p`, clamped into the sampling rectangle.
    pub fn sample(&self, p: Vec2) -> Result<f64> {
        check_position(p)?;
        Ok(self.sample_clamped(p))
    }

    pub(crate) fn sample_clamped(&self, p: Vec2) -> f64 {
        self.lattice().sample(&self.data, self.grid.dx, p)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|x| x * s).collect(),
            ..self.clone()
        }
    }

    /// Zeroes the outermost ring of sites.
    pub fn with_zero_boundary(mut self) -> Self {
        let (w, h) = self.dims();
        for j in 0..h {
            for i in 0..w {
                if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                    self.data[j * w + i] = 0.0;
                }
            }
        }
        self
    }
}

/// Staggered velocity: `u` on the `(nx+1)×ny` vertical faces, `v` on the
/// `nx×(ny+1)` horizontal faces.
#[derive(Clone, Debug, PartialEq)]
pub struct MacVelocity {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl MacVelocity {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.u_count()],
            v: vec![0.0; grid.v_count()],
        }
    }

    pub fn uniform(grid: Grid, a: f64, b: f64) -> Self {
        Self {
            grid,
            u: vec![a; grid.u_count()],
            v: vec![b; grid.v_count()],
        }
    }

    pub fn from_data(grid: Grid, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if u.len() != grid.u_count() || v.len() != grid.v_count() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} u and {} v values", grid.u_count(), grid.v_count()),
                found: format!("{} u and {} v values", u.len(), v.len()),
            });
        }
        check_finite("velocity u", &u)?;
        check_finite("velocity v", &v)?;
        Ok(Self { grid, u, v })
    }

    /// Samples a continuous velocity function at the face sites.
    pub fn from_fn(grid: Grid, f: impl Fn(Vec2) -> Vec2) -> Self {
        let mut vel = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let k = vel.u_idx(i, j);
                vel.u[k] = f(grid.u_pos(i, j)).x;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let k = vel.v_idx(i, j);
                vel.v[k] = f(grid.v_pos(i, j)).y;
            }
        }
        vel
    }

    #[inline]
    pub fn u_idx(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx + 1) + i
    }

    #[inline]
    pub fn v_idx(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[self.u_idx(i, j)]
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[self.v_idx(i, j)]
    }

    /// Component-wise bilinear interpolation on the two face lattices.
    pub fn sample(&self, p: Vec2) -> Result<Vec2> {
        check_position(p)?;
        Ok(self.sample_clamped(p))
    }

    pub(crate) fn sample_clamped(&self, p: Vec2) -> Vec2 {
        let dx = self.grid.dx;
        Vec2::new(
            Lattice::u(&self.grid).sample(&self.u, dx, p),
            Lattice::v(&self.grid).sample(&self.v, dx, p),
        )
    }

    /// Zeroes the wall-normal faces (no-flux walls).
    pub fn enforce_no_flux(&mut self) {
        let Grid { nx, ny, .. } = self.grid;
        for j in 0..ny {
            let (a, b) = (self.u_idx(0, j), self.u_idx(nx, j));
            self.u[a] = 0.0;
            self.u[b] = 0.0;
        }
        for i in 0..nx {
            let (a, b) = (self.v_idx(i, 0), self.v_idx(i, ny));
            self.v[a] = 0.0;
            self.v[b] = 0.0;
        }
    }

    /// Largest magnitude among the wall-normal faces.
    pub fn max_boundary_normal(&self) -> f64 {
        let Grid { nx, ny, .. } = self.grid;
        let mut m = 0.0f64;
        for j in 0..ny {
            m = m.max(self.u_at(0, j).abs()).max(self.u_at(nx, j).abs());
        }
        for i in 0..nx {
            m = m.max(self.v_at(i, 0).abs()).max(self.v_at(i, ny).abs());
        }
        m
    }

    /// Discrete divergence at cell centers.
    pub fn divergence(&self) -> ScalarField {
        let Grid { nx, ny, dx } = self.grid;
        let mut div = ScalarField::zeros(self.grid, Siting::Cell);
        for j in 0..ny {
            for i in 0..nx {
                let d = (self.u_at(i + 1, j) - self.u_at(i, j) + self.v_at(i, j + 1)
                    - self.v_at(i, j))
                    / dx;
                div.data[j * nx + i] = d;
            }
        }
        div
    }

    pub fn max_abs_divergence(&self) -> f64 {
        self.divergence().data.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Euclidean norm over all stored face values.
    pub fn norm_l2(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn distance_l2(&self, other: &MacVelocity) -> f64 {
        let du = self.u.iter().zip(&other.u).map(|(a, b)| (a - b) * (a - b));
        let dv = self.v.iter().zip(&other.v).map(|(a, b)| (a - b) * (a - b));
        du.chain(dv).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            u: self.u.iter().map(|x| x * s).collect(),
            v: self.v.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &MacVelocity) -> Self {
        Self {
            grid: self.grid,
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect(),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &MacVelocity) -> Self {
        self.add(&other.scaled(-1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    NodeScalar,
    CellScalar,
    Mac,
}

impl FieldKind {
    pub fn code(self) -> u8 {
        match self {
            FieldKind::NodeScalar => 0,
            FieldKind::CellScalar => 1,
            FieldKind::Mac => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FieldKind::NodeScalar),
            1 => Some(FieldKind::CellScalar),
            2 => Some(FieldKind::Mac),
            _ => None,
        }
    }
}

impl std::fmt::Display for FieldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FieldKind::NodeScalar => "node scalar",
            FieldKind::CellScalar => "cell scalar",
            FieldKind::Mac => "MAC vector",
        })
    }
}

/// Any field that can be stored in a field file.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Mac(MacVelocity),
}

impl Field {
    pub fn kind(&self) -> FieldKind {
        match self {
            Field::Scalar(s) if s.siting == Siting::Node => FieldKind::NodeScalar,
            Field::Scalar(_) => FieldKind::CellScalar,
            Field::Mac(_) => FieldKind::Mac,
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            Field::Scalar(s) => &s.grid,
            Field::Mac(m) => &m.grid,
        }
    }

    /// All stored values in file order (MAC: u block then v block).
    pub fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Field::Scalar(s) => Box::new(s.data.iter().copied()),
            Field::Mac(m) => Box::new(m.u.iter().chain(&m.v).copied()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Field::Scalar(s) => s.data.len(),
            Field::Mac(m) => m.u.len() + m.v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_scalar(self) -> Option<ScalarField> {
        match self {
            Field::Scalar(s) => Some(s),
            Field::Mac(_) => None,
        }
    }

    pub fn into_mac(self) -> Option<MacVelocity> {
        match self {
            Field::Mac(m) => Some(m),
            Field::Scalar(_) => None,
        }
    }

    /// Same field with every value replaced by `f(value)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        match self {
            Field::Scalar(s) => Field::Scalar(ScalarField {
                data: s.data.iter().map(|&x| f(x)).collect(),
                ..s.clone()
            }),
            Field::Mac(m) => Field::Mac(MacVelocity {
                grid: m.grid,
                u: m.u.iter().map(|&x| f(x)).collect(),
                v: m.v.iter().map(|&x| f(x)).collect(),
            }),
        }
    }
}

impl From<ScalarField> for Field {
    fn from(s: ScalarField) -> Self {
        Field::Scalar(s)
    }
}

impl From<MacVelocity> for Field {
    fn from(m: MacVelocity) -> Self {
        Field::Mac(m)
    }
}
