use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use wge::bridge::{Bridge, BridgeConfig};
use wge::format::{demo_from_json, snapshot_to_json};
use wge::store::DemoStore;
use wge_core::demo::{replay, SOURCE_HUMAN};
use wge_core::dsl::DEFAULT_STEP_CAP;
use wge_core::env::{Env, OraclePolicy, Policy};
use wge_core::lattice::induce;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn json_of(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

/// The `"snapshot":{...}` member of a canonical response, as raw text.
fn snapshot_bytes(body: &str) -> &str {
    let start = body.find("\"snapshot\":").unwrap() + "\"snapshot\":".len();
    let mut depth = 0;
    for (i, c) in body[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return &body[start..start + i + 1];
                }
            }
            _ => {}
        }
    }
    panic!("unterminated snapshot");
}

fn bridge(dir: &std::path::Path) -> Bridge {
    Bridge::new(BridgeConfig::new(dir))
}

#[tokio::test]
async fn created_session_matches_reset_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"task": "login-user", "seed": 7}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let expected = Env::new("login-user").unwrap().reset(7);
    assert_eq!(snapshot_bytes(&body), snapshot_to_json(&expected.snapshot));
    let v = json_of(&body);
    assert_eq!(v["goal"]["fields"]["username"], expected.goal.get("username").unwrap());
    assert_eq!(v["horizon"], 6);
}

#[tokio::test]
async fn oracle_loopback_writes_a_replayable_human_demo() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let env = Env::new("login-user").unwrap();
    let (_, body) = call(&app, "POST", "/sessions", Some(json!({"task": "login-user", "seed": 3}))).await;
    let id = json_of(&body)["id"].as_str().unwrap().to_owned();

    let mut state = env.reset(3);
    while !state.done {
        let a = OraclePolicy.act(&env, &state).unwrap();
        let doc = serde_json::to_value(wge::format::ActionDoc::from(&a)).unwrap();
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/actions"), Some(doc)).await;
        assert_eq!(status, StatusCode::OK);
        state = env.step(&state, &a).unwrap();
        assert_eq!(snapshot_bytes(&body), snapshot_to_json(&state.snapshot));
        let v = json_of(&body);
        assert_eq!(v["done"], state.done);
        assert_eq!(v["reward"], state.reward);
    }
    assert_eq!(state.reward, 1);

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["saved"], true);
    let path = std::path::PathBuf::from(v["path"].as_str().unwrap());
    let demo = demo_from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(demo.source, SOURCE_HUMAN);
    assert_eq!(replay(&demo), Ok(1));
    let lattice = induce(&demo, "recorded", Some(DEFAULT_STEP_CAP)).unwrap();
    assert!(lattice.is_well_formed());
    assert_eq!(DemoStore::new(dir.path()).load_task("login-user").unwrap().len(), 1);
}

#[tokio::test]
async fn failed_sessions_save_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let (_, body) = call(&app, "POST", "/sessions", Some(json!({"task": "click-button", "seed": 1}))).await;
    let id = json_of(&body)["id"].as_str().unwrap().to_owned();
    let (_, body) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(json_of(&body)["saved"], false);
    assert!(DemoStore::new(dir.path()).load_task("click-button").unwrap().is_empty());
}

#[tokio::test]
async fn invalid_action_fails_the_episode_and_closes_it() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let (_, body) = call(&app, "POST", "/sessions", Some(json!({"task": "login-user", "seed": 2}))).await;
    let id = json_of(&body)["id"].as_str().unwrap().to_owned();
    let uri = format!("/sessions/{id}/actions");
    let (status, body) = call(&app, "POST", &uri, Some(json!({"kind": "click", "element": 999_999}))).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["done"], true);
    assert_eq!(v["reward"], -1);
    assert!(v["error"].is_string());

    let (status, _) = call(&app, "POST", &uri, Some(json!({"kind": "click", "element": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_sessions_and_tasks_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let missing = uuid::Uuid::new_v4();
    let (status, _) = call(&app, "POST", &format!("/sessions/{missing}/actions"), Some(json!({"kind": "click", "element": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions/not-a-uuid/finalize", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"task": "fly-plane", "seed": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn interleaved_sessions_do_not_interfere() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let env = Env::new("click-checkboxes").unwrap();
    let mut ids = Vec::new();
    let mut states = Vec::new();
    for seed in [11, 12] {
        let (_, body) = call(&app, "POST", "/sessions", Some(json!({"task": "click-checkboxes", "seed": seed}))).await;
        ids.push(json_of(&body)["id"].as_str().unwrap().to_owned());
        states.push(env.reset(seed));
    }
    let mut turn = 0;
    while states.iter().any(|s| !s.done) {
        let i = turn % 2;
        turn += 1;
        if states[i].done {
            continue;
        }
        let a = env.oracle_action(&states[i]);
        let doc = serde_json::to_value(wge::format::ActionDoc::from(&a)).unwrap();
        let (_, body) = call(&app, "POST", &format!("/sessions/{}/actions", ids[i]), Some(doc)).await;
        states[i] = env.step(&states[i], &a).unwrap();
        assert_eq!(snapshot_bytes(&body), snapshot_to_json(&states[i].snapshot));
    }
    for id in &ids {
        let (_, body) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
        assert_eq!(json_of(&body)["saved"], true);
    }
}

#[tokio::test]
async fn tasks_are_listed_with_horizons() {
    let dir = tempfile::tempdir().unwrap();
    let app = bridge(dir.path()).router();
    let (status, body) = call(&app, "GET", "/tasks", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    let large = v.as_array().unwrap().iter().find(|t| t["name"] == "click-checkboxes-large").unwrap();
    assert_eq!(large["horizon"], 13);
    assert_eq!(v.as_array().unwrap().len(), wge_core::env::tasks::TASK_NAMES.len());
}

#[tokio::test]
async fn idle_sessions_expire() {
    let dir = tempfile::tempdir().unwrap();
    let b = bridge(dir.path());
    let app = b.router();
    let (_, body) = call(&app, "POST", "/sessions", Some(json!({"task": "click-button", "seed": 1}))).await;
    let id = json_of(&body)["id"].as_str().unwrap().to_owned();
    assert_eq!(b.expire(Instant::now() + Duration::from_secs(599)), 0);
    assert_eq!(b.expire(Instant::now() + Duration::from_secs(601)), 1);
    assert_eq!(b.session_count(), 0);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn metrics_stream_replays_existing_lines_then_follows_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.jsonl");
    std::fs::write(&metrics, "{\"step\":0,\"val_success\":0.0,\"test_success\":0.0}\n").unwrap();
    let mut config = BridgeConfig::new(dir.path());
    config.metrics = Some(metrics.clone());
    config.poll_interval = Duration::from_millis(20);
    let app = Bridge::new(config).router();
    let req = Request::builder().uri("/metrics/stream").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut frames = resp.into_body().into_data_stream();

    let first = frames.next().await.unwrap().unwrap();
    assert_eq!(std::str::from_utf8(&first).unwrap(), "data: {\"step\":0,\"val_success\":0.0,\"test_success\":0.0}\n\n");

    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().append(true).open(&metrics).unwrap();
    writeln!(f, "{{\"step\":40,\"val_success\":0.5,\"test_success\":0.25}}").unwrap();
    let second = tokio::time::timeout(Duration::from_secs(5), frames.next()).await.unwrap().unwrap().unwrap();
    assert!(std::str::from_utf8(&second).unwrap().contains("\"step\":40"));
}

#[tokio::test]
async fn metrics_stream_without_a_file_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let (status, _) = call(&bridge(dir.path()).router(), "GET", "/metrics/stream", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
