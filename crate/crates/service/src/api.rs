//! `/v1` HTTP API over simulated sessions.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hiergrounding::grounder::Grounder;
use hiergrounding::planners::{PlannerConfig, PlannerKind};
use hiergrounding::session::{CommandOutcome, Session, SessionError};
use hiergrounding::world::{bundled, BundledEnv, EnvFile, GridEnv};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct AppState {
    default_env: GridEnv,
    grounder: Arc<Grounder>,
    planner: PlannerConfig,
    sessions: Mutex<HashMap<u64, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(default_env: GridEnv, grounder: Grounder, planner: PlannerConfig) -> Self {
        AppState {
            default_env,
            grounder: Arc::new(grounder),
            planner,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.lock().expect("session table poisoned").get(&id).cloned().ok_or(ApiError::UnknownSession(id))
    }
}

#[derive(Debug)]
pub enum ApiError {
    UnknownSession(u64),
    BadRequest(String),
    Session(SessionError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::UnknownSession(id) => (StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}")),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "BadRequest", m),
            ApiError::Session(e) => {
                let status =
                    if e.is_client_error() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::INTERNAL_SERVER_ERROR };
                (status, e.code(), e.to_string())
            }
        };
        (status, Json(json!({ "error": { "code": code, "message": message } }))).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct CreateSession {
    /// Inline environment file.
    pub env: Option<EnvFile>,
    /// Name of a bundled environment.
    pub bundled: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct CommandRequest {
    pub text: String,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
}

fn default_planner() -> PlannerKind {
    PlannerKind::Amdp
}

#[derive(Debug, Serialize)]
struct Created {
    id: u64,
    state: Value,
}

fn state_json(env: &GridEnv) -> Value {
    json!({ "env": env.to_file(), "render": env.render() })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/state", get(get_state))
        .route("/v1/sessions/{id}/command", post(run_command))
        .route("/v1/sessions/{id}/reset", post(reset))
        .route("/v1/sessions/{id}/log", get(get_log))
        .with_state(state)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let env = match (req.env, req.bundled) {
        (Some(file), _) => GridEnv::from_file(&file).map_err(|e| ApiError::BadRequest(e.to_string()))?,
        (None, Some(name)) => bundled(name.parse::<BundledEnv>().map_err(ApiError::BadRequest)?),
        (None, None) => app.default_env.clone(),
    };
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let state = state_json(&env);
    app.sessions.lock().expect("session table poisoned").insert(id, Arc::new(Mutex::new(Session::new(env))));
    Ok((StatusCode::CREATED, Json(Created { id, state })))
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let session = app.session(id)?;
    let s = session.lock().expect("session poisoned");
    Ok(Json(state_json(s.env())))
}

async fn run_command(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(req): Json<CommandRequest>,
) -> Result<Json<CommandOutcome>, ApiError> {
    let session = app.session(id)?;
    let grounder = app.grounder.clone();
    let cfg = app.planner.clone();
    // planning can take a while on large grids
    let outcome = tokio::task::spawn_blocking(move || {
        let mut s = session.lock().expect("session poisoned");
        s.command(&grounder, &req.text, req.planner, &cfg)
    })
    .await
    .map_err(|e| ApiError::BadRequest(format!("command task failed: {e}")))?;
    outcome.map(Json).map_err(ApiError::Session)
}

async fn reset(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<Value>, ApiError> {
    let session = app.session(id)?;
    let mut s = session.lock().expect("session poisoned");
    s.reset();
    Ok(Json(state_json(s.env())))
}

async fn get_log(State(app): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Json<Vec<CommandOutcome>>, ApiError> {
    let session = app.session(id)?;
    let s = session.lock().expect("session poisoned");
    Ok(Json(s.log().to_vec()))
}
