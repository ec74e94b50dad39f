//! HTTP bridge between the simulated tasks and a browser-based recorder.
//!
//! | route | effect |
//! |---|---|
//! | `POST /sessions` `{task, seed}` | start an episode; returns id, goal, snapshot |
//! | `POST /sessions/{id}/actions` `{kind, element, text}` | step; returns snapshot, reward, done |
//! | `POST /sessions/{id}/finalize` | close; saves a demonstration iff the reward is +1 |
//! | `GET /tasks` | registered tasks with their horizons |
//! | `GET /metrics/stream` | server-sent events, one per `metrics.jsonl` line |
//!
//! Snapshots inside responses use the canonical encoding byte for byte.
//! Sessions idle for longer than the configured timeout are dropped.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use uuid::Uuid;
use wge_core::demo::{DemoStep, Demonstration, SOURCE_HUMAN};
use wge_core::env::tasks::TASK_NAMES;
use wge_core::env::{Action, Env, EnvState};

use crate::format::{canonical, goal_value, snapshot_value, ActionDoc};
use crate::store::DemoStore;

pub const DEFAULT_IDLE: Duration = Duration::from_secs(600);

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub demo_root: PathBuf,
    /// `metrics.jsonl` served by the stream endpoint.
    pub metrics: Option<PathBuf>,
    pub idle_timeout: Duration,
    pub poll_interval: Duration,
}

impl BridgeConfig {
    pub fn new(demo_root: impl Into<PathBuf>) -> Self {
        Self { demo_root: demo_root.into(), metrics: None, idle_timeout: DEFAULT_IDLE, poll_interval: Duration::from_millis(500) }
    }
}

struct Session {
    env: Env,
    state: EnvState,
    steps: Vec<DemoStep>,
    started: Instant,
    last_seen: Instant,
}

#[derive(Clone)]
pub struct Bridge {
    config: Arc<BridgeConfig>,
    sessions: Arc<Mutex<HashMap<Uuid, Session>>>,
}

#[derive(Debug, Deserialize)]
struct CreateBody {
    task: String,
    seed: u64,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn canonical_response(status: StatusCode, body: &Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], canonical(body)).into_response()
}

impl Bridge {
    pub fn new(config: BridgeConfig) -> Self {
        Self { config: Arc::new(config), sessions: Arc::default() }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/sessions", post(create))
            .route("/sessions/{id}/actions", post(act))
            .route("/sessions/{id}/finalize", post(finalize))
            .route("/tasks", get(tasks))
            .route("/metrics/stream", get(metrics_stream))
            .with_state(self.clone())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session lock").len()
    }

    /// Drops sessions idle since before `now - idle_timeout`; returns how
    /// many were removed.
    pub fn expire(&self, now: Instant) -> usize {
        let mut sessions = self.sessions.lock().expect("session lock");
        let before = sessions.len();
        let idle = self.config.idle_timeout;
        sessions.retain(|_, s| now.saturating_duration_since(s.last_seen) <= idle);
        before - sessions.len()
    }

    /// Serves until the listener fails, sweeping idle sessions once a
    /// minute.
    pub async fn serve(self, listener: tokio::net::TcpListener) -> std::io::Result<()> {
        let sweeper = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                sweeper.expire(Instant::now());
            }
        });
        axum::serve(listener, self.router()).await
    }
}

async fn create(State(bridge): State<Bridge>, body: Option<Json<CreateBody>>) -> Response {
    let Some(Json(body)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected {\"task\", \"seed\"}");
    };
    let env = match Env::new(&body.task) {
        Ok(env) => env,
        Err(e) => return error(StatusCode::NOT_FOUND, e.to_string()),
    };
    let state = env.reset(body.seed);
    let id = Uuid::new_v4();
    let response = json!({
        "id": id.to_string(),
        "task": env.name(),
        "seed": body.seed,
        "horizon": env.horizon(),
        "goal": goal_value(&state.goal),
        "snapshot": snapshot_value(&state.snapshot),
    });
    let now = Instant::now();
    bridge.sessions.lock().expect("session lock").insert(id, Session { env, state, steps: Vec::new(), started: now, last_seen: now });
    canonical_response(StatusCode::CREATED, &response)
}

fn parse_id(raw: &str) -> Result<Uuid, Response> {
    Uuid::parse_str(raw).map_err(|_| error(StatusCode::NOT_FOUND, format!("no session {raw}")))
}

async fn act(State(bridge): State<Bridge>, Path(raw): Path<String>, body: Option<Json<ActionDoc>>) -> Response {
    let id = match parse_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let mut sessions = bridge.sessions.lock().expect("session lock");
    let Some(session) = sessions.get_mut(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no session {raw}"));
    };
    session.last_seen = Instant::now();
    if session.state.done {
        return error(StatusCode::CONFLICT, "episode already finished");
    }
    let Some(Json(doc)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected {\"kind\", \"element\", \"text\"}");
    };
    let action = Action::try_from(doc);
    let problem = match &action {
        Err(e) => Some(e.to_string()),
        Ok(a) if !Env::is_valid_action(&session.state, a) => Some(format!("action {a} is not admissible here")),
        Ok(_) => None,
    };
    let next = match (&action, &problem) {
        (Ok(a), None) => session.env.step(&session.state, a).expect("episode is running"),
        _ => {
            // An inadmissible action ends the episode as a failure.
            let mut failed = session.state.clone();
            failed.step_index += 1;
            failed.done = true;
            failed.reward = -1;
            failed
        }
    };
    if let (Ok(a), None) = (action, &problem) {
        let t_ms = session.last_seen.duration_since(session.started).as_millis() as u64;
        session.steps.push(DemoStep { snapshot: session.state.snapshot.clone(), action: a, t_ms });
    }
    session.state = next;
    let mut response = json!({
        "snapshot": snapshot_value(&session.state.snapshot),
        "reward": session.state.reward,
        "done": session.state.done,
        "steps": session.steps.len(),
    });
    if let Some(p) = problem {
        response["error"] = Value::String(p);
    }
    canonical_response(StatusCode::OK, &response)
}

async fn finalize(State(bridge): State<Bridge>, Path(raw): Path<String>) -> Response {
    let id = match parse_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let Some(session) = bridge.sessions.lock().expect("session lock").remove(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no session {raw}"));
    };
    let reward = session.state.reward;
    if !(session.state.done && reward == 1) {
        return canonical_response(StatusCode::OK, &json!({ "saved": false, "reward": reward }));
    }
    let demo = Demonstration {
        task: session.env.name().into(),
        seed: session.state.seed,
        goal: session.state.goal.clone(),
        source: SOURCE_HUMAN.into(),
        steps: session.steps,
        reward,
    };
    let store = DemoStore::new(bridge.config.demo_root.clone());
    let saved = tokio::task::spawn_blocking(move || store.save(&demo)).await;
    match saved {
        Ok(Ok(path)) => canonical_response(StatusCode::OK, &json!({ "saved": true, "reward": reward, "path": path.display().to_string() })),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn tasks() -> Response {
    let list: Vec<Value> = TASK_NAMES
        .iter()
        .map(|name| {
            let env = Env::new(name).expect("registered");
            json!({ "name": name, "horizon": env.horizon() })
        })
        .collect();
    canonical_response(StatusCode::OK, &Value::Array(list))
}

/// Streams complete lines of the metrics file, then keeps polling for
/// new ones. A missing file yields no events until it appears.
fn tail_lines(path: PathBuf, poll: Duration) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold((path, 0usize, Vec::<String>::new()), move |(path, mut offset, mut pending)| async move {
        loop {
            if let Some(line) = pending.pop() {
                return Some((Ok(Event::default().data(line)), (path, offset, pending)));
            }
            if let Ok(bytes) = tokio::fs::read(&path).await {
                if bytes.len() > offset {
                    let fresh = &bytes[offset..];
                    if let Some(end) = fresh.iter().rposition(|b| *b == b'\n') {
                        let chunk = String::from_utf8_lossy(&fresh[..end]).into_owned();
                        offset += end + 1;
                        pending = chunk.lines().filter(|l| !l.is_empty()).map(str::to_owned).rev().collect();
                        continue;
                    }
                }
            }
            tokio::time::sleep(poll).await;
        }
    })
}

async fn metrics_stream(State(bridge): State<Bridge>) -> Response {
    let Some(path) = bridge.config.metrics.clone() else {
        return error(StatusCode::NOT_FOUND, "no metrics file configured");
    };
    Sse::new(tail_lines(path, bridge.config.poll_interval)).keep_alive(KeepAlive::default()).into_response()
}
