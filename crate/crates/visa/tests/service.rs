//! HTTP API tests, driven in-process through the router.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;
use visa::service::{router, AppState, BackendFactory};
use visa::session::BoxedBackend;
use visa_core::llm::{labelled, MockBackend};
use visa_core::orchestrator::engine::Resources;
use visa_core::orchestrator::script_ideal_orchestrator;

fn mock_app() -> Router {
    let mut script = labelled(
        &[
            ("correct_validate:Corona plus 100", r#"{"revised":"Coronal plus 100","valid":true}"#),
            ("command_reasoning:Coronal plus 100", r#"{"agent":"iv_agent"}"#),
            ("iv_agent:Coronal plus 100", r#"{"action":"SHOW_MOVE","deltas":{"coronal":{"by":100}}}"#),
            ("correct_validate:Order pizza", r#"{"revised":"Order pizza","valid":false}"#),
        ],
        true,
    );
    script_ideal_orchestrator(&mut script);
    let factory: BackendFactory = Arc::new(move || Ok(Box::new(MockBackend::new(script.clone())) as BoxedBackend));
    router(AppState::new(factory, Resources::default(), 3))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(|b| Body::from(b.to_owned())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["id"].as_str().unwrap().to_owned()
}

#[tokio::test(flavor = "multi_thread")]
async fn health_check() {
    let (status, body) = call(&mock_app(), Method::GET, "/healthz", None).await;
    assert_eq!((status, body), (StatusCode::OK, json!({"status": "ok"})));
}

#[tokio::test(flavor = "multi_thread")]
async fn session_lifecycle() {
    let app = mock_app();
    let id = create(&app).await;
    assert_ne!(id, create(&app).await, "session ids are unique");

    let (status, reply) =
        call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(r#"{"text":"Corona plus 100"}"#)).await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert_eq!(reply["clip"], 0);
    assert_eq!(reply["revised"], "Coronal plus 100");
    assert_eq!(reply["agent"], "iv_agent");
    assert_eq!(reply["outcome"]["action"], "SHOW_MOVE");
    assert!(reply["timeline"].is_object() || reply["timeline"].is_array());

    // Silence re-selects the last agent.
    let (status, reply) = call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(r#"{"absent":true}"#)).await;
    assert_eq!(status, StatusCode::OK, "{reply}");
    assert_eq!(reply["clip"], 1);
    assert_eq!(reply["agent"], "iv_agent");

    // Invalid command: the clip ends as a failure.
    let (status, reply) =
        call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(r#"{"text":"Order pizza"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["valid"], false);
    assert!(reply["outcome"].is_null());

    let (status, view) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["id"], id.as_str());
    assert_eq!(view["clip"], 3);
    assert_eq!(view["overlays"].as_array().unwrap().len(), 1);

    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/reset"), None).await;
    assert_eq!((status, body["clip"].clone()), (StatusCode::OK, json!(0)));
    let (_, view) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(view["overlays"].as_array().unwrap().len(), 0);

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains(&id));
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests_are_rejected() {
    let app = mock_app();
    let id = create(&app).await;
    let uri = format!("/sessions/{id}/command");
    for body in ["not json", "{}", r#"{"text":"x","absent":true}"#, r#"{"txt":"x"}"#, r#"{"text":3}"#] {
        let (status, reply) = call(&app, Method::POST, &uri, Some(body)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert!(reply["error"].is_string());
    }
    for (method, uri) in [
        (Method::POST, "/sessions/nope/command"),
        (Method::POST, "/sessions/nope/reset"),
        (Method::GET, "/sessions/nope/state"),
        (Method::DELETE, "/sessions/nope"),
    ] {
        let (status, _) = call(&app, method, uri, Some(r#"{"text":"x"}"#)).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    // Rejected requests do not advance the session.
    let (_, view) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(view["clip"], 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn model_failures_are_service_unavailable() {
    // A strict script with no entry for this utterance fails the model call.
    let app = mock_app();
    let id = create(&app).await;
    let (status, body) =
        call(&app, Method::POST, &format!("/sessions/{id}/command"), Some(r#"{"text":"Unscripted"}"#)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{body}");
    let (_, view) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(view["clip"], 0, "state is restored after a model failure");

    // A backend that cannot be constructed.
    let factory: BackendFactory = Arc::new(|| anyhow::bail!("no model server"));
    let app = router(AppState::new(factory, Resources::default(), 3));
    let (status, body) = call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].as_str().unwrap().contains("no model server"));
}
