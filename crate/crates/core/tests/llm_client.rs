mod common;

use common::*;
use sqlreflect::config::Config;
use sqlreflect::llm::{Backoff, BackendKind, CompletionRequest, LiveConfig, LlmError, LlmGateway, API_KEY_ENV};
use sqlreflect::prompt::GenerationParams;

fn gateway(base: String) -> LlmGateway {
    LlmGateway::live(LiveConfig {
        base_url: base,
        api_key: "secret".into(),
        backoff: Backoff {
            initial_s: 0.01,
            factor: 2.0,
            jitter: 0.2,
        },
    })
    .unwrap()
}

fn request(retries: u32) -> CompletionRequest {
    CompletionRequest::new("PROMPT", &GenerationParams::default()).with_limits(5.0, retries)
}

#[tokio::test]
async fn success_sends_documented_body() {
    let (base, stub) = spawn_stub(vec![Stub::text(200, "CREATE INDEX a ON t (x);")]).await;
    let out = gateway(base).complete(&request(2)).await.unwrap();
    assert_eq!(out.text, "CREATE INDEX a ON t (x);");
    assert_eq!(out.backend, BackendKind::Live);
    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(bodies[0].0.as_deref(), Some("Bearer secret"));
    assert_eq!(
        bodies[0].1,
        r#"{"model":"gpt-3.5-turbo-instruct","prompt":"PROMPT","temperature":0.7,"max_tokens":256}"#
    );
}

#[tokio::test]
async fn server_errors_are_retried() {
    let (base, stub) = spawn_stub(vec![(503, "busy".into()), (500, "oops".into()), Stub::text(200, "ok")]).await;
    let out = gateway(base).complete(&request(2)).await.unwrap();
    assert_eq!(out.text, "ok");
    assert_eq!(stub.hits(), 3);
}

#[tokio::test]
async fn retries_run_out() {
    let (base, stub) = spawn_stub(vec![(429, "slow down".into())]).await;
    let err = gateway(base).complete(&request(2)).await.unwrap_err();
    assert_eq!(stub.hits(), 3);
    match err {
        LlmError::Exhausted { attempts, last } => {
            assert_eq!(attempts, 3);
            assert!(matches!(*last, LlmError::Status { status: 429, .. }));
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (base, stub) = spawn_stub(vec![(401, "bad key".into())]).await;
    let err = gateway(base).complete(&request(2)).await.unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 401, ref body } if body == "bad key"), "{err:?}");
    assert_eq!(stub.hits(), 1);
}

#[tokio::test]
async fn malformed_response_is_protocol_error() {
    let (base, _) = spawn_stub(vec![(200, r#"{"choices":[]}"#.into())]).await;
    let err = gateway(base).complete(&request(0)).await.unwrap_err();
    assert!(matches!(err, LlmError::Protocol(_)), "{err:?}");
}

#[tokio::test]
async fn unreachable_endpoint() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = gateway(format!("http://{addr}/v1")).complete(&request(1)).await.unwrap_err();
    match err {
        LlmError::Exhausted { attempts: 2, last } => assert!(matches!(*last, LlmError::Transport(_)), "{last:?}"),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn live_backend_needs_key() {
    // the only test in this binary touching the variable
    std::env::remove_var(API_KEY_ENV);
    let cfg = Config::parse("[llm]\nbackend = \"live\"\n", "-").unwrap();
    let err = cfg.gateway().unwrap_err().to_string();
    assert!(err.contains(API_KEY_ENV), "{err}");
    assert!(Config::default().gateway().is_ok());
}
