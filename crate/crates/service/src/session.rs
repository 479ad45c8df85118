use std::sync::{Mutex, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use smokeflow::reconstruct::{strokes_to_flow, FitParams, FitReport, FlowTarget, Generators, StrokeSet};
use smokeflow::render::{encode_png, scalar_image};
use smokeflow::sim::{self, SimConfig, SimParams, SimState};
use smokeflow::{Grid, Result, ScalarField, Vec2};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub params: SimConfig,
    /// Missing strokes mean an empty set over the simulation domain.
    pub strokes: Option<StrokeSet>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsRequest {
    pub count: usize,
    /// Replaces the session's guidance gain before stepping.
    pub guidance_gain: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokesRequest {
    pub strokes: StrokeSet,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub norm_l2: f64,
}

impl From<&ScalarField> for FieldStats {
    fn from(f: &ScalarField) -> Self {
        Self { min: f.min(), max: f.max(), norm_l2: f.norm_l2() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepsResponse {
    pub frames_added: usize,
    pub cfl_max: f64,
    /// `‖vel − target‖₂` after the last step.
    pub target_distance: f64,
    pub frame_count: usize,
}

/// Mutable simulation state, guarded by the session's async mutex.
pub struct SimSession {
    pub config: SimConfig,
    pub params: SimParams,
    pub state: SimState,
    pub fit: FitParams,
    pub target: FlowTarget,
    generators: Generators,
}

impl SimSession {
    /// Session at rest with one emitter pass applied and the target fitted.
    /// Returns the session and its frame 0.
    pub fn create(req: CreateRequest, generators: Generators) -> Result<(Self, Vec<u8>)> {
        let config = req.params;
        let grid = config.grid()?;
        let params = config.params()?;
        let mut fit = FitParams::new(grid);
        fit.tol = config.tol;
        let strokes = req.strokes.unwrap_or_else(|| StrokeSet::empty(Vec2::new(grid.width(), grid.height())));
        let target = strokes_to_flow(&strokes, &fit, &generators)?;
        let mut state = SimState::at_rest(grid);
        sim::emit(&mut state.density, &params.emitter, params.dt);
        let frame = render(&state)?;
        Ok((Self { config, params, state, fit, target, generators }, frame))
    }

    pub fn grid(&self) -> Grid {
        self.state.grid()
    }

    pub fn retarget(&mut self, strokes: &StrokeSet) -> Result<FitReport> {
        self.target = strokes_to_flow(strokes, &self.fit, &self.generators)?;
        Ok(self.target.report.clone())
    }

    pub fn target_distance(&self) -> f64 {
        self.state.vel.distance_l2(&self.target.velocity)
    }

    /// Advances `count` steps, handing each rendered frame to `sink` as soon
    /// as it exists.
    pub fn advance(&mut self, count: usize, mut sink: impl FnMut(Vec<u8>)) -> Result<(usize, f64)> {
        let mut cfl_max: f64 = 0.0;
        for n in 0..count {
            let (next, report) = match sim::step(&self.state, &self.params, Some(&self.target.velocity)) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("step {n} of {count} failed: {e}");
                    return Err(e);
                }
            };
            self.state = next;
            cfl_max = cfl_max.max(report.cfl);
            sink(render(&self.state)?);
        }
        Ok((count, cfl_max))
    }
}

fn render(state: &SimState) -> Result<Vec<u8>> {
    encode_png(&scalar_image(&state.density))
}

pub struct Session {
    pub sim: std::sync::Arc<tokio::sync::Mutex<SimSession>>,
    /// Rendered density frames; readable while a steps call is running.
    pub frames: RwLock<Vec<axum::body::Bytes>>,
    pub created: Instant,
    touched: Mutex<Instant>,
}

impl Session {
    pub fn new(sim: SimSession, frame0: Vec<u8>) -> Self {
        let now = Instant::now();
        Self {
            sim: std::sync::Arc::new(tokio::sync::Mutex::new(sim)),
            frames: RwLock::new(vec![frame0.into()]),
            created: now,
            touched: Mutex::new(now),
        }
    }

    pub fn touch(&self) {
        *self.touched.lock().unwrap() = Instant::now();
    }

    pub fn idle_for(&self) -> std::time::Duration {
        self.touched.lock().unwrap().elapsed()
    }

    pub fn frame(&self, n: usize) -> Option<axum::body::Bytes> {
        self.frames.read().unwrap().get(n).cloned()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.read().unwrap().len()
    }

    pub fn push_frame(&self, png: Vec<u8>) {
        self.frames.write().unwrap().push(png.into());
    }
}
