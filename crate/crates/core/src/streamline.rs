//! Streamline sketches: seed selection at cell centers, RK4 tracing, and
//! rasterization into grayscale line drawings.

use image::{GrayImage, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, MacVelocity, Vec2};
use crate::reconstruct::{Stroke, StrokeSet};

/// Number of seeds kept for a training sketch.
pub const DEFAULT_SEED_COUNT: usize = 512;
pub const DEFAULT_SKETCH_SIZE: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub position: Vec2,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub seed_speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    /// Integration step in time units.
    pub h: f64,
    pub max_steps: usize,
    pub min_speed: f64,
    /// Also integrate backwards from the seed and prepend that branch.
    #[serde(default)]
    pub bidirectional: bool,
}

impl TraceParams {
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            h: 0.5 * grid.dx,
            max_steps: 4 * grid.nx.max(grid.ny),
            min_speed: 1e-4,
            bidirectional: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) || self.max_steps == 0 || self.min_speed.is_nan() || self.min_speed < 0.0 {
            return Err(Error::InvalidParams(format!(
                "trace needs h > 0, max_steps >= 1, min_speed >= 0 (got {}, {}, {})",
                self.h, self.max_steps, self.min_speed
            )));
        }
        Ok(())
    }
}

/// The `k` fastest cell centers, fastest first; equal speeds keep `(j, i)`
/// order.
pub fn select_seeds(vel: &MacVelocity, k: usize) -> Vec<Seed> {
    let grid = vel.grid;
    let mut seeds = Vec::with_capacity(grid.cell_count());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let position = grid.cell_center(i, j);
            seeds.push(Seed { position, speed: vel.sample_clamped(position).length() });
        }
    }
    // Stable sort preserves the row-major (j, i) order among ties.
    seeds.sort_by(|a, b| b.speed.total_cmp(&a.speed));
    seeds.truncate(k);
    seeds
}

fn rk4_step(vel: &MacVelocity, x: Vec2, h: f64) -> Vec2 {
    let k1 = vel.sample_clamped(x);
    let k2 = vel.sample_clamped(x + k1 * (0.5 * h));
    let k3 = vel.sample_clamped(x + k2 * (0.5 * h));
    let k4 = vel.sample_clamped(x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn integrate(vel: &MacVelocity, seed: Vec2, h: f64, params: &TraceParams) -> Vec<Vec2> {
    let grid = vel.grid;
    let mut points = vec![seed];
    let mut x = seed;
    for _ in 0..params.max_steps {
        if vel.sample_clamped(x).length() < params.min_speed {
            break;
        }
        let next = rk4_step(vel, x, h);
        if !next.is_finite() || !grid.contains(next) {
            break;
        }
        points.push(next);
        x = next;
    }
    points
}

/// Fixed-step RK4 streamline from `seed`, which is always the first point
/// (or the junction point when tracing both ways).
pub fn trace(vel: &MacVelocity, seed: Vec2, params: &TraceParams) -> Polyline {
    let seed_speed = vel.sample_clamped(seed).length();
    let forward = integrate(vel, seed, params.h, params);
    let points = if params.bidirectional {
        let mut back = integrate(vel, seed, -params.h, params);
        back.reverse();
        back.pop();
        back.extend(forward);
        back
    } else {
        forward
    };
    Polyline { points, seed_speed }
}

/// Traces the `k` fastest seeds. Output order follows seed order.
pub fn trace_top(vel: &MacVelocity, k: usize, params: &TraceParams) -> Vec<Polyline> {
    let seeds = select_seeds(vel, k);
    seeds.par_iter().map(|s| trace(vel, s.position, params)).collect()
}

pub fn polylines_to_strokes(grid: &Grid, lines: &[Polyline]) -> StrokeSet {
    StrokeSet {
        domain: Vec2::new(grid.width(), grid.height()),
        strokes: lines
            .iter()
            .map(|l| Stroke { points: l.points.clone(), speed: l.seed_speed })
            .collect(),
    }
}

fn to_pixel(p: Vec2, domain: Vec2, width: u32, height: u32) -> (i64, i64) {
    let px = (p.x / domain.x * (width - 1) as f64).round() as i64;
    let py = ((1.0 - p.y / domain.y) * (height - 1) as f64).round() as i64;
    (px, py)
}

fn plot(img: &mut GrayImage, x: i64, y: i64) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Luma([0]));
    }
}

fn bresenham(img: &mut GrayImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(img, x, y);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Black 1-pixel polylines on white. Image row 0 is the top of the domain.
pub fn render_sketch<'a>(
    lines: impl IntoIterator<Item = &'a [Vec2]>,
    domain: Vec2,
    width: u32,
    height: u32,
) -> Result<GrayImage> {
    if width < 8 || height < 8 {
        return Err(Error::InvalidParams(format!("sketch must be at least 8x8, got {width}x{height}")));
    }
    if !(domain.x > 0.0 && domain.y > 0.0) {
        return Err(Error::InvalidParams("domain extent must be positive".into()));
    }
    let mut img = GrayImage::from_pixel(width, height, Luma([255]));
    for points in lines {
        let mut pixels = points.iter().map(|&p| to_pixel(p, domain, width, height));
        let Some(mut prev) = pixels.next() else { continue };
        plot(&mut img, prev.0, prev.1);
        for px in pixels {
            bresenham(&mut img, prev, px);
            prev = px;
        }
    }
    Ok(img)
}

pub fn render_strokes(strokes: &StrokeSet, width: u32, height: u32) -> Result<GrayImage> {
    render_sketch(strokes.strokes.iter().map(|s| s.points.as_slice()), strokes.domain, width, height)
}
