mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use serde_json::Value;
use sqlreflect::llm::{Backoff, LiveConfig, LlmGateway};
use sqlreflect::pipeline::Pipeline;
use sqlreflect::scheduler::SchedulerConfig;
use sqlreflect::service::{router, AppState};

fn app(log_dir: Option<std::path::PathBuf>) -> Arc<AppState> {
    Arc::new(AppState::new(Pipeline::mock(), SchedulerConfig::default(), log_dir).with_clock(|| 1000.0))
}

fn json(body: &str) -> Value {
    serde_json::from_str(body).unwrap()
}

const GOLDEN: &str = "session_transcript.golden";

#[tokio::test]
async fn scripted_session_matches_golden() {
    let (_, transcript) = run_script(&router(app(None))).await;
    let path = fixture(GOLDEN);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &transcript).unwrap();
    }
    assert_eq!(transcript, std::fs::read_to_string(path).unwrap());
}

#[tokio::test]
async fn scripted_session_covers_every_decision() {
    let (_, transcript) = run_script(&router(app(None))).await;
    for needle in [
        "\"decision\":\"show_now\"",
        "\"decision\":\"queued\"",
        "\"decision\":\"dropped\"",
        "\"DATATYPE_COMPARISON\"",
        "\"COMPOSITE_VS_MULTI_SINGLE\"",
        "\"COMPOSITE_IND_COL_ORDER\"",
        "\"DENORMALIZATION_WHEN\"",
        "\"TABLE_CHOICE_DENORMALIZATION\"",
    ] {
        assert!(transcript.contains(needle), "missing {needle}");
    }
    let flush = transcript.lines().find(|l| l.contains("/task ")).unwrap();
    let flushed = json(flush.split(" -> ").nth(1).unwrap());
    assert_eq!(flushed["flushed"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn restore_reproduces_session() {
    let dir = tempfile::tempdir().unwrap();
    let first = router(app(Some(dir.path().to_path_buf())));
    let (id, _) = run_script(&first).await;
    let (_, before) = call(&first, "GET", &format!("/v1/sessions/{id}/reflections"), None).await;

    let restored = app(Some(dir.path().to_path_buf()));
    assert_eq!(restored.restore().await.unwrap(), 1);
    assert_eq!(restored.session_ids(), [id.as_str()]);
    let second = router(restored.clone());
    let (status, after) = call(&second, "GET", &format!("/v1/sessions/{id}/reflections"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);

    // a new session after restore does not reuse the restored id
    let (_, body) = call(&second, "POST", "/v1/sessions", Some(r#"{"group_id":"Group 1"}"#.into())).await;
    assert_ne!(json(&body)["session_id"], Value::String(id));
}

#[tokio::test]
async fn status_codes() {
    let app = router(app(None));
    let (s, body) = call(&app, "GET", "/healthz", None).await;
    assert_eq!((s, json(&body)["backend"].as_str()), (StatusCode::OK, Some("mock")));

    let (s, body) = call(&app, "POST", "/v1/sessions", Some(r#"{"group_id":"Team A!"}"#.into())).await;
    assert_eq!(s, StatusCode::CREATED);
    let created = json(&body);
    assert_eq!(created["session_id"], "team-a-0001");
    assert_eq!(created["task_id"], 1);
    assert_eq!(created["tau_s"], 300.0);
    let id = "team-a-0001";

    for bad in [r#"{"group_id":""}"#, r#"{"group":"x"}"#, "not json", r#"{"group_id":"x","task_id":7}"#, r#"{"group_id":"x","tau_s":-1}"#] {
        let (s, body) = call(&app, "POST", "/v1/sessions", Some(bad.into())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}: {body}");
        assert!(json(&body)["error"].is_string());
    }

    let (s, _) = call(&app, "POST", "/v1/sessions/nope-0001/commands", Some(r#"{"sql":"SELECT 1"}"#.into())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/v1/sessions/nope-0001/reflections", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let cmd = format!("/v1/sessions/{id}/commands");
    let (s, _) = call(&app, "POST", &cmd, Some(r#"{"sql":"  "}"#.into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &cmd, Some(r#"{"sql":"SELECT 1","ts":-3}"#.into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, body) = call(&app, "POST", &cmd, Some(r#"{"sql":"SELECT 1","ts":10}"#.into())).await;
    assert_eq!(s, StatusCode::OK);
    let r = json(&body);
    assert_eq!((r["decision"].as_str(), r["classification"].is_null()), (Some("none"), true));

    let (s, _) = call(&app, "POST", &cmd, Some(r#"{"sql":"SELECT 1","ts":5}"#.into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "timestamps go forward");

    let task = format!("/v1/sessions/{id}/task");
    let (s, _) = call(&app, "POST", &task, Some(r#"{"task_id":2,"ts":20}"#.into())).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&app, "POST", &task, Some(r#"{"task_id":1,"ts":30}"#.into())).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", &task, Some(r#"{"task_id":9}"#.into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, _) = call(&app, "GET", &format!("/v1/sessions/{id}/reflections?since_ts=abc"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn reflections_since() {
    let app = router(app(None));
    let (id, _) = run_script(&app).await;
    let all = |q: &'static str| {
        let app = app.clone();
        let id = id.clone();
        async move {
            let (_, body) = call(&app, "GET", &format!("/v1/sessions/{id}/reflections{q}"), None).await;
            json(&body).as_array().unwrap().iter().map(|r| r["shown_at"].as_f64().unwrap()).collect::<Vec<_>>()
        }
    };
    assert_eq!(all("").await, [0.0, 400.0, 400.0, 400.0, 420.0]);
    assert_eq!(all("?since_ts=400").await, [420.0]);
    assert_eq!(all("?since_ts=399.5").await, [400.0, 400.0, 400.0, 420.0]);
}

/// A completion that cannot be validated degrades the reflection to the
/// static message, end to end through the service.
async fn origin_with_completion(text: &str) -> (String, Option<String>) {
    let (base, stub) = spawn_stub(vec![Stub::text(200, text)]).await;
    let gateway = LlmGateway::live(LiveConfig {
        base_url: base,
        api_key: "k".into(),
        backoff: Backoff::default(),
    })
    .unwrap();
    let app = router(Arc::new(AppState::new(Pipeline::new(gateway), SchedulerConfig::default(), None)));
    let (_, body) = call(&app, "POST", "/v1/sessions", Some(r#"{"group_id":"g"}"#.into())).await;
    let id = json(&body)["session_id"].as_str().unwrap().to_string();
    let cmd = format!("/v1/sessions/{id}/commands");
    call(&app, "POST", &cmd, Some(r#"{"sql":"CREATE TABLE t (a INT, b INT, c INT)","ts":0}"#.into())).await;
    let (s, body) = call(&app, "POST", &cmd, Some(r#"{"sql":"CREATE INDEX i ON t (a, b)","ts":1}"#.into())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(stub.hits(), 1);
    let r = json(&body);
    (
        r["reflection"]["origin"].as_str().unwrap().to_string(),
        r["triggers"][0]["verdict"].as_str().map(String::from),
    )
}

#[tokio::test]
async fn prose_completion_falls_back() {
    let got = origin_with_completion("Here are some thoughts about indexing strategies for your table.").await;
    assert_eq!(got, ("static_fallback".into(), Some("fallback".into())));
}

#[tokio::test]
async fn valid_completion_is_dynamic() {
    let got = origin_with_completion("CREATE INDEX j ON t (b, a);\nCREATE INDEX k ON t (a, c);\nCREATE INDEX l ON t (c, a);").await;
    assert_eq!(got, ("dynamic".into(), Some("accept".into())));
}
