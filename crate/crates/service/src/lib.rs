//! HTTP session API: submit strokes, get the reconstructed flow, and step a
//! smoke simulation guided toward it.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/sessions` | `{params, strokes}` → 201 `{id, psi_stats, fit_report}` |
//! | POST | `/sessions/{id}/steps` | `{count, guidance_gain?}` → `{frames_added, cfl_max, target_distance, frame_count}` |
//! | PUT | `/sessions/{id}/strokes` | `{strokes}` → `{fit_report}` |
//! | GET | `/sessions/{id}/frames/{n}` | `image/png` |
//! | GET | `/sessions/{id}/field?kind=velocity\|psi\|target\|target_psi` | SFLD bytes |
//! | DELETE | `/sessions/{id}` | 204 |
//! | GET | `/health` | `{"status":"ok"}` |
//!
//! Frame 0 is the emitter-seeded state at creation; frame `n` follows step `n`.

mod session;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use smokeflow::hhd::stream_function;
use smokeflow::poisson::SolverOptions;
use smokeflow::reconstruct::Generators;
use smokeflow::{Error, Field};
use tower_http::cors::CorsLayer;
use uuid::Uuid;

pub use session::{CreateRequest, FieldStats, Session, SimSession, StepsRequest, StepsResponse, StrokesRequest};

/// Upper bound on `count` in one steps request.
pub const MAX_STEPS_PER_REQUEST: usize = 10_000;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    pub idle_timeout: Duration,
    pub generators: Generators,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_sessions: 16, idle_timeout: Duration::from_secs(600), generators: Generators::default() }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { config, sessions: Mutex::new(HashMap::new()) })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("no session {id}"));
        let id = Uuid::parse_str(id).map_err(|_| not_found())?;
        let s = self.sessions.lock().unwrap().get(&id).cloned().ok_or_else(not_found)?;
        s.touch();
        Ok(s)
    }

    /// Drops sessions idle longer than the timeout, skipping any that are
    /// mid-request. Returns how many were removed.
    pub fn sweep(&self) -> usize {
        let timeout = self.config.idle_timeout;
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.idle_for() < timeout || s.sim.try_lock().is_err());
        before - sessions.len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, msg: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": msg.into() }) }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DegenerateStrokes(_) | Error::GridMismatch { .. } | Error::DimensionMismatch { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::InvalidParams(_) | Error::InvalidGrid(_) | Error::InvalidPosition(..) | Error::Json(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut out = ApiError::new(status, e.to_string());
        if let Error::ProjectionFailed(stats) = &e {
            out.body["stats"] = serde_json::to_value(stats).unwrap_or(Value::Null);
        }
        out
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

fn at_capacity() -> ApiError {
    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "session capacity reached")
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse(&body)?;
    if app.session_count() >= app.config.max_sessions {
        return Err(at_capacity());
    }
    let generators = app.config.generators.clone();
    let (sim, frame0) = blocking(move || SimSession::create(req, generators)).await??;
    let id = Uuid::new_v4();
    let body = json!({
        "id": id.to_string(),
        "psi_stats": FieldStats::from(&sim.target.psi),
        "fit_report": sim.target.report,
    });
    {
        let mut sessions = app.sessions.lock().unwrap();
        if sessions.len() >= app.config.max_sessions {
            return Err(at_capacity());
        }
        sessions.insert(id, Arc::new(Session::new(sim, frame0)));
    }
    log::info!("session {id} created");
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn steps(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StepsResponse>, ApiError> {
    let session = app.get(&id)?;
    let req: StepsRequest = parse(&body)?;
    if req.count > MAX_STEPS_PER_REQUEST {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("count {} exceeds {MAX_STEPS_PER_REQUEST}", req.count),
        ));
    }
    let mut guard = session
        .sim
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "a steps request is already running"))?;
    if let Some(gain) = req.guidance_gain {
        let mut params = guard.params;
        params.guidance_gain = gain;
        params.validate()?;
        guard.params = params;
        guard.config.guidance_gain = gain;
    }
    let s = session.clone();
    let result = blocking(move || {
        let out = guard.advance(req.count, |png| s.push_frame(png));
        out.map(|(added, cfl)| (added, cfl, guard.target_distance()))
    })
    .await?;
    session.touch();
    let (frames_added, cfl_max, target_distance) = result?;
    Ok(Json(StepsResponse { frames_added, cfl_max, target_distance, frame_count: session.frame_count() }))
}

async fn put_strokes(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let session = app.get(&id)?;
    let req: StrokesRequest = parse(&body)?;
    let mut guard = session.sim.clone().lock_owned().await;
    let report = blocking(move || guard.retarget(&req.strokes)).await??;
    session.touch();
    Ok(Json(json!({ "fit_report": report })))
}

async fn get_frame(
    State(app): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    let session = app.get(&id)?;
    let png = session
        .frame(n)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no frame {n}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct FieldQuery {
    kind: String,
}

async fn get_field(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<FieldQuery>,
) -> Result<Response, ApiError> {
    let session = app.get(&id)?;
    let guard = session.sim.clone().lock_owned().await;
    let field: Field = match q.kind.as_str() {
        "velocity" => guard.state.vel.clone().into(),
        "target" => guard.target.velocity.clone().into(),
        "target_psi" => guard.target.psi.clone().into(),
        "psi" => {
            let vel = guard.state.vel.clone();
            let opts = SolverOptions::with_tol(guard.config.tol);
            drop(guard);
            blocking(move || stream_function(&vel, &opts)).await??.0.into()
        }
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown kind {other:?}; expected velocity, psi, target or target_psi"),
            ))
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], field.encode()).into_response())
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    app.get(&id)?;
    let id = Uuid::parse_str(&id).expect("validated by get");
    app.sessions.lock().unwrap().remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/steps", post(steps))
        .route("/sessions/{id}/strokes", put(put_strokes))
        .route("/sessions/{id}/frames/{n}", get(get_frame))
        .route("/sessions/{id}/field", get(get_field))
        .layer(CorsLayer::permissive())
        .with_state(app)
}

/// Runs the idle-expiry sweeper until the process exits.
pub fn spawn_sweeper(app: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let period = (app.config.idle_timeout / 4).clamp(Duration::from_millis(50), Duration::from_secs(30));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let removed = app.sweep();
            if removed > 0 {
                log::info!("expired {removed} idle session(s)");
            }
        }
    })
}

/// Serves on an already bound listener, with the sweeper running.
pub async fn serve(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    let app = AppState::new(config);
    let sweeper = spawn_sweeper(app.clone());
    let out = axum::serve(listener, router(app)).await;
    sweeper.abort();
    out
}
