//! Flow reconstruction from directed strokes.
//!
//! The baseline fits a zero-boundary stream function whose curl follows the
//! strokes: each stroke is resampled by arc length, and at every sample the
//! bilinearly sampled curl of ψ is asked to match `speed · tangent`. A
//! Laplacian smoothness term closes the least-squares problem, which is solved
//! through its normal equations with CG.
//!
//! External generators (learned models, scripts) can replace either stage.
//! They are invoked as `CMD <in-path> <out-path>`; stage 1 receives the
//! strokes JSON and writes a node-scalar field file, stage 2 receives that ψ
//! file and writes a MAC velocity file. Their outputs are admitted through
//! [`validate_generated_field`].

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{read_field, write_field, Field, FieldKind, Grid, Lattice, MacVelocity, ScalarField, Vec2};
use crate::hhd::curl_velocity;
use crate::poisson::{conjugate_gradient, DirichletNodeLaplacian, Preconditioner, SolveStats, SpdOperator};

fn default_speed() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    /// Drawing order is the intended flow direction.
    pub points: Vec<Vec2>,
    #[serde(default = "default_speed")]
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeSet {
    pub domain: Vec2,
    pub strokes: Vec<Stroke>,
}

impl StrokeSet {
    pub fn empty(domain: Vec2) -> Self {
        Self { domain, strokes: Vec::new() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stroke sets always serialize")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Same strokes drawn in the opposite direction.
    pub fn reversed(&self) -> Self {
        Self {
            domain: self.domain,
            strokes: self
                .strokes
                .iter()
                .map(|s| Stroke { points: s.points.iter().rev().copied().collect(), speed: s.speed })
                .collect(),
        }
    }

    /// Checks the invariants a fit relies on.
    pub fn validate(&self) -> Result<()> {
        let d = self.domain;
        if !(d.x > 0.0 && d.y > 0.0 && d.is_finite()) {
            return Err(Error::DegenerateStrokes(format!("domain [{}, {}] is not positive", d.x, d.y)));
        }
        for (n, s) in self.strokes.iter().enumerate() {
            if s.points.len() < 2 {
                return Err(Error::DegenerateStrokes(format!("stroke {n} has fewer than 2 points")));
            }
            if !(s.speed.is_finite() && s.speed > 0.0) {
                return Err(Error::DegenerateStrokes(format!("stroke {n} has non-positive speed")));
            }
            for p in &s.points {
                if !p.is_finite() || p.x < 0.0 || p.y < 0.0 || p.x > d.x || p.y > d.y {
                    return Err(Error::DegenerateStrokes(format!("stroke {n} leaves the domain at ({}, {})", p.x, p.y)));
                }
            }
            if s.points.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::DegenerateStrokes(format!("stroke {n} repeats a point")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub grid: Grid,
    pub lambda: f64,
    /// Arc-length spacing of constraint samples; `None` means `dx`.
    pub sample_spacing: Option<f64>,
    pub tol: f64,
    /// `None` means `10 · nx · ny`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl FitParams {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            lambda: 1e-2,
            sample_spacing: None,
            tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Some(s) = self.sample_spacing {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParams(format!("sample spacing must be > 0, got {s}")));
            }
        }
        self.grid.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub no_constraints: bool,
    pub samples: usize,
    /// Mean cosine between fitted velocity and stroke tangent, per stroke.
    pub per_stroke_mean_cosine: Vec<f64>,
    /// Median of the cosine over all samples.
    pub median_cosine: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

/// A velocity constraint at one arc-length sample.
#[derive(Clone, Debug)]
struct Sample {
    stroke: usize,
    tangent: Vec2,
    speed: f64,
    /// Sparse rows mapping interior-node unknowns to the sampled u and v.
    u_row: Vec<(usize, f64)>,
    v_row: Vec<(usize, f64)>,
}

impl Sample {
    fn velocity(&self, psi: &[f64]) -> Vec2 {
        let eval = |row: &[(usize, f64)]| row.iter().fold(0.0, |acc, &(k, c)| acc + c * psi[k]);
        Vec2::new(eval(&self.u_row), eval(&self.v_row))
    }
}

/// Arc-length midpoints of `n` equal pieces, with the local unit tangent.
fn resample(points: &[Vec2], spacing: f64) -> Vec<(Vec2, Vec2)> {
    let seg_len: Vec<f64> = points.windows(2).map(|w| w[0].distance(w[1])).collect();
    let total: f64 = seg_len.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let dir = |m: usize| (points[m + 1] - points[m]) * (1.0 / seg_len[m]);
    let n = (total / spacing).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n);
    let (mut m, mut start) = (0, 0.0);
    for k in 0..n {
        let s = (k as f64 + 0.5) * total / n as f64;
        while m + 1 < seg_len.len() && start + seg_len[m] < s {
            start += seg_len[m];
            m += 1;
        }
        let local = ((s - start) / seg_len[m]).clamp(0.0, 1.0);
        let pos = points[m] + (points[m + 1] - points[m]) * local;
        let near = 1e-12 * total;
        let tangent = if (s - start - seg_len[m]).abs() <= near && m + 1 < seg_len.len() {
            let t = dir(m) + dir(m + 1);
            t * (1.0 / t.length().max(f64::MIN_POSITIVE))
        } else if (s - start).abs() <= near && m > 0 {
            let t = dir(m - 1) + dir(m);
            t * (1.0 / t.length().max(f64::MIN_POSITIVE))
        } else {
            dir(m)
        };
        out.push((pos, tangent));
    }
    out
}

/// Sparse row as (unknown index, coefficient) pairs.
type SparseRow = Vec<(usize, f64)>;

/// Coefficients of the bilinearly sampled curl at `p` in terms of interior
/// ψ unknowns (boundary nodes are fixed at zero and drop out).
fn curl_rows(grid: &Grid, p: Vec2) -> (SparseRow, SparseRow) {
    let w = grid.nx - 1;
    let dx = grid.dx;
    let unknown = |i: usize, j: usize| -> Option<usize> {
        (i >= 1 && i < grid.nx && j >= 1 && j < grid.ny).then(|| (j - 1) * w + (i - 1))
    };
    let mut acc_u: BTreeMap<usize, f64> = BTreeMap::new();
    let mut acc_v: BTreeMap<usize, f64> = BTreeMap::new();
    let add = |acc: &mut BTreeMap<usize, f64>, node: (usize, usize), c: f64| {
        if let Some(k) = unknown(node.0, node.1) {
            *acc.entry(k).or_insert(0.0) += c;
        }
    };

    // u(i,j) = (ψ(i,j+1) − ψ(i,j)) / dx
    let (i, j, fx, fy) = Lattice::u(grid).locate(dx, p);
    for (di, dj, wgt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let (fi, fj) = (i + di, j + dj);
        add(&mut acc_u, (fi, fj + 1), wgt / dx);
        add(&mut acc_u, (fi, fj), -wgt / dx);
    }
    // v(i,j) = −(ψ(i+1,j) − ψ(i,j)) / dx
    let (i, j, fx, fy) = Lattice::v(grid).locate(dx, p);
    for (di, dj, wgt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let (fi, fj) = (i + di, j + dj);
        add(&mut acc_v, (fi + 1, fj), -wgt / dx);
        add(&mut acc_v, (fi, fj), wgt / dx);
    }
    let clean = |acc: BTreeMap<usize, f64>| acc.into_iter().filter(|&(_, c)| c != 0.0).collect();
    (clean(acc_u), clean(acc_v))
}

fn build_samples(strokes: &StrokeSet, params: &FitParams) -> Vec<Sample> {
    let spacing = params.sample_spacing.unwrap_or(params.grid.dx);
    let mut samples = Vec::new();
    for (n, stroke) in strokes.strokes.iter().enumerate() {
        for (pos, tangent) in resample(&stroke.points, spacing) {
            let (u_row, v_row) = curl_rows(&params.grid, pos);
            samples.push(Sample { stroke: n, tangent, speed: stroke.speed, u_row, v_row });
        }
    }
    samples
}

/// `Cᵀ C + λ·dx²·L²` over interior node unknowns.
struct NormalOperator<'a> {
    samples: &'a [Sample],
    laplacian: DirichletNodeLaplacian,
    grid: Grid,
    weight: f64,
    n: usize,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl SpdOperator for NormalOperator<'_> {
    fn len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        if self.weight > 0.0 {
            let mut lx = self.scratch.borrow_mut();
            self.laplacian.apply(x, &mut lx);
            self.laplacian.apply(&lx, out);
            out.iter_mut().for_each(|o| *o *= self.weight);
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        for s in self.samples {
            for row in [&s.u_row, &s.v_row] {
                let r = row.iter().fold(0.0, |acc, &(k, c)| acc + c * x[k]);
                for &(k, c) in row.iter() {
                    out[k] += c * r;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        if self.weight > 0.0 {
            // Squared column norm of L: 4² on the diagonal plus 1 per interior neighbor.
            let (w, h) = (self.grid.nx - 1, self.grid.ny - 1);
            let inv_dx4 = self.grid.dx.powi(-4);
            for j in 0..h {
                for i in 0..w {
                    let neighbors = [i > 0, i + 1 < w, j > 0, j + 1 < h].iter().filter(|&&b| b).count();
                    d[j * w + i] = self.weight * (16.0 + neighbors as f64) * inv_dx4;
                }
            }
        }
        for s in self.samples {
            for row in [&s.u_row, &s.v_row] {
                for &(k, c) in row.iter() {
                    d[k] += c * c;
                }
            }
        }
        d
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn cosine_report(samples: &[Sample], stroke_count: usize, psi_unknowns: &[f64], stats: &SolveStats) -> FitReport {
    let mut per_stroke = vec![(0.0, 0usize); stroke_count];
    let mut all = Vec::with_capacity(samples.len());
    for s in samples {
        let vel = s.velocity(psi_unknowns);
        let len = vel.length();
        let cos = if len > 0.0 { vel.dot(s.tangent) / len } else { 0.0 };
        per_stroke[s.stroke].0 += cos;
        per_stroke[s.stroke].1 += 1;
        all.push(cos);
    }
    FitReport {
        no_constraints: samples.is_empty(),
        samples: samples.len(),
        per_stroke_mean_cosine: per_stroke
            .into_iter()
            .map(|(sum, n)| if n > 0 { sum / n as f64 } else { 0.0 })
            .collect(),
        median_cosine: median(all),
        converged: stats.converged,
        iterations: stats.iterations,
        final_residual: stats.final_residual,
    }
}

fn check_domain(strokes: &StrokeSet, grid: &Grid) -> Result<()> {
    let (w, h) = (grid.width(), grid.height());
    let tol = 1e-9 * w.max(h);
    if (strokes.domain.x - w).abs() > tol || (strokes.domain.y - h).abs() > tol {
        return Err(Error::GridMismatch {
            expected: format!("domain [{w}, {h}]"),
            found: format!("domain [{}, {}]", strokes.domain.x, strokes.domain.y),
        });
    }
    Ok(())
}

/// Least-squares stream function whose curl follows the strokes.
pub fn fit_stream_function(strokes: &StrokeSet, params: &FitParams) -> Result<(ScalarField, FitReport)> {
    params.validate()?;
    strokes.validate()?;
    check_domain(strokes, &params.grid)?;
    let grid = params.grid;
    let laplacian = DirichletNodeLaplacian::new(&grid);
    let samples = build_samples(strokes, params);
    let n = laplacian.len();

    let mut rhs = vec![0.0; n];
    for s in &samples {
        let target = s.tangent * s.speed;
        for &(k, c) in &s.u_row {
            rhs[k] += c * target.x;
        }
        for &(k, c) in &s.v_row {
            rhs[k] += c * target.y;
        }
    }
    let op = NormalOperator {
        samples: &samples,
        laplacian: DirichletNodeLaplacian::new(&grid),
        grid,
        weight: params.lambda * grid.dx * grid.dx,
        n,
        scratch: std::cell::RefCell::new(vec![0.0; n]),
    };
    let max_iter = params.max_iter.unwrap_or(10 * grid.nx * grid.ny);
    let (x, stats) = conjugate_gradient(&op, &rhs, params.tol, max_iter, params.preconditioner, false);
    if !stats.converged {
        log::warn!("stroke fit stopped after {} iterations at residual {:.3e}", stats.iterations, stats.final_residual);
    }
    let report = cosine_report(&samples, strokes.strokes.len(), &x, &stats);
    Ok((laplacian.scatter(grid, &x), report))
}

/// Cosine agreement of an arbitrary ψ (for example an external generator's
/// output) with the strokes.
pub fn evaluate_fit(strokes: &StrokeSet, psi: &ScalarField, params: &FitParams) -> Result<FitReport> {
    strokes.validate()?;
    params.grid.check_same(&psi.grid)?;
    let samples = build_samples(strokes, params);
    let unknowns = DirichletNodeLaplacian::new(&params.grid).gather(psi);
    let stats = SolveStats { converged: true, ..SolveStats::default() };
    Ok(cosine_report(&samples, strokes.strokes.len(), &unknowns, &stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MacDiagnostics {
    pub max_divergence: f64,
    pub max_boundary_normal: f64,
}

#[derive(Clone, Debug)]
pub struct GeneratedField {
    pub field: Field,
    pub diagnostics: Option<MacDiagnostics>,
}

/// Admits a generator's output: parse, check kind and grid, report MAC
/// quality diagnostics without rejecting on them.
pub fn validate_generated_field(path: impl AsRef<Path>, expected: FieldKind, grid: &Grid) -> Result<GeneratedField> {
    let field = read_field(path)?;
    if field.kind() != expected {
        return Err(Error::KindMismatch { expected: expected.to_string(), found: field.kind().to_string() });
    }
    let g = field.grid();
    if g.nx != grid.nx || g.ny != grid.ny {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", grid.nx, grid.ny),
            found: format!("{}x{}", g.nx, g.ny),
        });
    }
    grid.check_same(g)?;
    let diagnostics = match &field {
        Field::Mac(m) => Some(MacDiagnostics {
            max_divergence: m.max_abs_divergence(),
            max_boundary_normal: m.max_boundary_normal(),
        }),
        Field::Scalar(_) => None,
    };
    Ok(GeneratedField { field, diagnostics })
}

/// Optional external commands for the two generation stages.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Generators {
    pub stage1: Option<String>,
    pub stage2: Option<String>,
}

impl Generators {
    /// Reads `STAGE1_CMD` and `STAGE2_CMD`; empty values count as unset.
    pub fn from_env() -> Self {
        let get = |key: &str| std::env::var(key).ok().filter(|v| !v.trim().is_empty());
        Self { stage1: get("STAGE1_CMD"), stage2: get("STAGE2_CMD") }
    }
}

/// Runs `cmd <input> <output>`; the command string is split on whitespace.
pub fn run_generator(cmd: &str, input: &Path, output: &Path) -> Result<()> {
    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::External("empty command".into()))?;
    let out = Command::new(program)
        .args(parts)
        .arg(input)
        .arg(output)
        .output()
        .map_err(|e| Error::External(format!("{cmd}: {e}")))?;
    if !out.status.success() {
        return Err(Error::External(format!(
            "{cmd} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FlowTarget {
    pub psi: ScalarField,
    pub velocity: MacVelocity,
    pub report: FitReport,
    pub diagnostics: Option<MacDiagnostics>,
}

/// Strokes to (ψ, velocity): the baseline fit and discrete curl, or the
/// configured external generators.
pub fn strokes_to_flow(strokes: &StrokeSet, params: &FitParams, generators: &Generators) -> Result<FlowTarget> {
    if generators.stage1.is_none() && generators.stage2.is_none() {
        let (psi, report) = fit_stream_function(strokes, params)?;
        let velocity = curl_velocity(&psi);
        return Ok(FlowTarget { psi, velocity, report, diagnostics: None });
    }

    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let (psi, report) = match &generators.stage1 {
        Some(cmd) => {
            strokes.validate()?;
            let input = dir.path().join("strokes.json");
            let output = dir.path().join("psi.sfld");
            strokes.write(&input)?;
            run_generator(cmd, &input, &output)?;
            let psi = validate_generated_field(&output, FieldKind::NodeScalar, &params.grid)?
                .field
                .into_scalar()
                .expect("kind checked");
            let report = evaluate_fit(strokes, &psi, params)?;
            (psi, report)
        }
        None => fit_stream_function(strokes, params)?,
    };
    let (velocity, diagnostics) = match &generators.stage2 {
        Some(cmd) => {
            let input = dir.path().join("psi_in.sfld");
            let output = dir.path().join("velocity.sfld");
            write_field(&input, &Field::Scalar(psi.clone()))?;
            run_generator(cmd, &input, &output)?;
            let generated = validate_generated_field(&output, FieldKind::Mac, &params.grid)?;
            let vel = generated.field.into_mac().expect("kind checked");
            (vel, generated.diagnostics)
        }
        None => (curl_velocity(&psi), None),
    };
    Ok(FlowTarget { psi, velocity, report, diagnostics })
}
