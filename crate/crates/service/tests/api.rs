#[path = "../../agents/tests/common/scenarios.rs"]
mod scenarios;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use scenarios::*;
use serde_json::{json, Value};
use storymap_agents::geocoder::Geocoder;
use storymap_agents::llm::Gateway;
use storymap_core::ids::FixedClock;
use storymap_core::sequencer::{evaluate, export_stream};
use storymap_core::{Project, SceneBreakdownItem, Timeline};
use storymap_service::{router, AppState, ErrorCode};
use tower::ServiceExt;

struct App {
    router: Router,
    state: Arc<AppState>,
    _dir: tempfile::TempDir,
}

fn app() -> App {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = fixtures_dir();
    let state = AppState::open(dir.path(), Gateway::replay(&fixtures), Geocoder::replay(&fixtures))
        .unwrap()
        .with_clock(Arc::new(FixedClock(1_700_000_000_000)), 7);
    let state = Arc::new(state);
    App {
        router: router(state.clone()),
        state,
        _dir: dir,
    }
}

impl App {
    async fn raw(&self, method: Method, uri: &str, body: Body) -> (StatusCode, String) {
        let req = Request::builder().method(method).uri(uri).body(body).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8_lossy(&bytes).into_owned())
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
        let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
        let (status, text) = self.raw(method, uri, body).await;
        let value = serde_json::from_str(&text).unwrap_or(Value::Null);
        (status, value, text)
    }

    async fn create(&self, script: &str) -> String {
        let (status, v, _) = self.call(Method::POST, "/projects", Some(json!({"script": script}))).await;
        assert_eq!(status, StatusCode::CREATED);
        assert_eq!(v["revision"], 1);
        v["project"]["id"].as_str().unwrap().to_string()
    }

    /// Seeds a project whose plan is a single unresolved item.
    async fn seed(&self, item: SceneBreakdownItem) -> String {
        let mut p = Project::new(format!("seed-{}", item.id), "", 0);
        p.breakdown = alone(&item);
        self.state.store.create(p.clone()).await.unwrap();
        p.id
    }
}

fn assert_api_error(status: StatusCode, v: &Value, code: ErrorCode) {
    assert_eq!(status, code.status(), "{v}");
    assert_eq!(v["code"], serde_json::to_value(code).unwrap(), "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{v}");
}

/// breakdown, research and compile for the mace script; returns the
/// pipeline response bodies and the project id.
async fn mace_pipeline(a: &App) -> (String, Vec<String>) {
    let id = a.create(&script("mace")).await;
    let mut bodies = Vec::new();
    let (s, v, t) = a
        .call(Method::POST, &format!("/projects/{id}/breakdown"), Some(json!({"revision": 1})))
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    assert_eq!(v["revision"], 2);
    bodies.push(t);
    let (s, v, t) = a
        .call(Method::POST, &format!("/projects/{id}/research"), Some(json!({"revision": 2})))
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    assert_eq!(v["sessions"].as_object().unwrap().len(), 4);
    bodies.push(t);
    let (s, v, t) = a
        .call(Method::POST, &format!("/projects/{id}/compile"), Some(json!({"revision": 3, "options": {}})))
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    assert_eq!(v["revision"], 4);
    assert_eq!(v["timeline"]["duration"], 30.0);
    assert!(v["report"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .all(|x| x["severity"] != "error"));
    bodies.push(t);
    (id, bodies)
}

#[tokio::test]
async fn healthz_reports_the_mode() {
    let a = app();
    let (s, v, _) = a.call(Method::GET, "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"mode": "replay", "status": "ok"}));
}

#[tokio::test]
async fn created_project_starts_at_revision_one() {
    let a = app();
    let id = a.create("Zoom to Paris.").await;
    let (s, v, _) = a.call(Method::GET, &format!("/projects/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision"], 1);
    assert_eq!(v["project"]["script"], "Zoom to Paris.");
    let (_, list, _) = a.call(Method::GET, "/projects", None).await;
    assert_eq!(list["projects"], json!([id]));

    let (s, _) = a.raw(Method::DELETE, &format!("/projects/{id}"), Body::empty()).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v, _) = a.call(Method::GET, &format!("/projects/{id}"), None).await;
    assert_api_error(s, &v, ErrorCode::NotFound);
}

#[tokio::test]
async fn pipeline_endpoints_run_the_mace_script() {
    let a = app();
    let (id, bodies) = mace_pipeline(&a).await;
    let breakdown: Value = serde_json::from_str(&bodies[0]).unwrap();
    let kinds: Vec<&str> = breakdown["breakdown"]["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["camera_zoom", "element_route", "camera_zoom", "highlight_area"]);

    let snap = a.state.store.load(&id).unwrap();
    assert!(snap.project.breakdown.items.iter().all(|i| i.resolved));
    assert!(snap.project.check().is_empty());
}

#[tokio::test]
async fn pipeline_responses_are_identical_across_restarts() {
    let (_, first) = mace_pipeline(&app()).await;
    let (_, second) = mace_pipeline(&app()).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn frame_matches_the_library_evaluation() {
    let a = app();
    let (id, _) = mace_pipeline(&a).await;
    let timeline: Timeline = a.state.store.load(&id).unwrap().project.timeline.clone();
    for t in ["0", "3.0", "7.25", "29.999", "30", "45"] {
        let (s, body) = a.raw(Method::GET, &format!("/projects/{id}/frame?t={t}"), Body::empty()).await;
        assert_eq!(s, StatusCode::OK);
        let expected = evaluate(&timeline, t.parse().unwrap()).to_canonical().unwrap();
        assert_eq!(body, expected, "t={t}");
    }
    let (s, body) = a.raw(Method::GET, &format!("/projects/{id}/frames?fps=10"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, export_stream(&timeline, 10).unwrap());
    assert_eq!(body.lines().count(), 301);

    let (s, v, _) = a.call(Method::GET, &format!("/projects/{id}/frame"), None).await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    let (s, v, _) = a.call(Method::GET, &format!("/projects/{id}/frame?t=abc"), None).await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    let (s, v, _) = a.call(Method::GET, &format!("/projects/{id}/frames?fps=0"), None).await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
}

#[tokio::test]
async fn stale_timeline_edit_conflicts_and_changes_nothing() {
    let a = app();
    let (id, _) = mace_pipeline(&a).await;
    let before = a.state.store.raw(&id).unwrap();
    let edit = json!({"op": "retime", "id": "item-4", "start_time": 20.0, "end_time": 31.0});
    let (s, v, _) = a
        .call(Method::PUT, &format!("/projects/{id}/timeline"), Some(json!({"revision": 3, "edit": edit})))
        .await;
    assert_api_error(s, &v, ErrorCode::Conflict);
    assert_eq!(v["detail"]["revision"], 4);
    assert_eq!(a.state.store.raw(&id).unwrap(), before);

    let (s, v, _) = a
        .call(Method::PUT, &format!("/projects/{id}/timeline"), Some(json!({"revision": 4, "edit": edit})))
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 5);
    assert_eq!(v["timeline"]["duration"], 31.0);

    // Timeline edit errors map to ApiError codes.
    let bad = json!({"op": "delete", "id": "nope"});
    let (s, v, _) = a
        .call(Method::PUT, &format!("/projects/{id}/timeline"), Some(json!({"revision": 5, "edit": bad})))
        .await;
    assert_api_error(s, &v, ErrorCode::NotFound);
    let bad = json!({"op": "retime", "id": "item-4", "start_time": 5.0, "end_time": 5.0});
    let (s, v, _) = a
        .call(Method::PUT, &format!("/projects/{id}/timeline"), Some(json!({"revision": 5, "edit": bad})))
        .await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
}

#[tokio::test]
async fn regenerate_applies_edits() {
    let a = app();
    let id = a.create(&script("mace")).await;
    a.call(Method::POST, &format!("/projects/{id}/breakdown"), Some(json!({"revision": 1})))
        .await;
    let edits = serde_json::to_value(delete_route()).unwrap();
    let (s, v, t) = a
        .call(
            Method::POST,
            &format!("/projects/{id}/breakdown/regenerate"),
            Some(json!({"revision": 2, "edits": edits})),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    let ids: Vec<&str> = v["breakdown"]["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["item-1", "item-3", "item-4"]);
}

#[tokio::test]
async fn chat_answers_without_touching_geometry() {
    let a = app();
    let id = a.seed(legislature()).await;
    let (s, _, t) = a
        .call(Method::POST, &format!("/projects/{id}/research"), Some(json!({"revision": 1})))
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    let before = a.state.store.load(&id).unwrap();
    let (s, v, t) = a
        .call(
            Method::POST,
            &format!("/projects/{id}/blocks/legislature/chat"),
            Some(json!({"revision": 2, "message": ASK_BUILDING_YEAR})),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    assert_eq!(v["updated"], false);
    assert!(v["reply"].as_str().unwrap().contains("1893"));
    let after = a.state.store.load(&id).unwrap();
    assert_eq!(after.revision, 3);
    assert_eq!(after.project.breakdown, before.project.breakdown);
    assert_eq!(
        after.project.sessions["legislature"].resolved_shape,
        before.project.sessions["legislature"].resolved_shape
    );

    let (s, v, _) = a
        .call(
            Method::POST,
            &format!("/projects/{id}/blocks/legislature/chat"),
            Some(json!({"revision": 3, "message": "  "})),
        )
        .await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    let (s, v, _) = a
        .call(
            Method::POST,
            &format!("/projects/{id}/blocks/ghost/chat"),
            Some(json!({"revision": 3, "message": "hi"})),
        )
        .await;
    assert_api_error(s, &v, ErrorCode::NotFound);
}

#[tokio::test]
async fn chat_can_replace_geometry() {
    let a = app();
    let id = a.seed(rockies()).await;
    a.call(Method::POST, &format!("/projects/{id}/research"), Some(json!({"revision": 1})))
        .await;
    let before = a.state.store.load(&id).unwrap();
    let (s, v, t) = a
        .call(
            Method::POST,
            &format!("/projects/{id}/blocks/rockies/chat"),
            Some(json!({"revision": 2, "message": REMOVE_CANADA})),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    assert_eq!(v["updated"], true);
    let after = a.state.store.load(&id).unwrap();
    assert_ne!(
        after.project.breakdown.item("rockies").unwrap().args,
        before.project.breakdown.item("rockies").unwrap().args
    );
}

#[tokio::test]
async fn unresolved_research_is_kept_and_reported() {
    let a = app();
    let id = a.seed(atlantis()).await;
    let (s, v, _) = a
        .call(Method::POST, &format!("/projects/{id}/research"), Some(json!({"revision": 1})))
        .await;
    assert_api_error(s, &v, ErrorCode::AgentFailed);
    assert_eq!(v["detail"]["revision"], 2);
    assert_eq!(v["detail"]["unresolved"][0]["id"], "atlantis");
    assert!(v["detail"]["unresolved"][0]["error"].as_str().unwrap().contains("no results"));
    let snap = a.state.store.load(&id).unwrap();
    assert!(snap.project.sessions["atlantis"].error.is_some());
}

#[tokio::test]
async fn agent_failures_carry_their_detail() {
    let a = app();
    let id = a.create(&script("rome")).await;
    let (s, v, _) = a
        .call(Method::POST, &format!("/projects/{id}/breakdown"), Some(json!({"revision": 1})))
        .await;
    assert_api_error(s, &v, ErrorCode::AgentFailed);
    assert!(v["detail"]["raw"].as_str().unwrap().contains("Show Rome."));
    assert_eq!(a.state.store.load(&id).unwrap().revision, 1);

    let id = a.create("A script nobody recorded.").await;
    let (s, v, _) = a
        .call(Method::POST, &format!("/projects/{id}/breakdown"), Some(json!({"revision": 1})))
        .await;
    assert_api_error(s, &v, ErrorCode::AgentFailed);
    assert!(v["message"].as_str().unwrap().contains("no fixture"), "{v}");
}

#[tokio::test]
async fn compile_requires_a_resolved_plan() {
    let a = app();
    let id = a.create(&script("mace")).await;
    a.call(Method::POST, &format!("/projects/{id}/breakdown"), Some(json!({"revision": 1})))
        .await;
    let (s, v, _) = a
        .call(Method::POST, &format!("/projects/{id}/compile"), Some(json!({"revision": 2})))
        .await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    assert!(v["message"].as_str().unwrap().contains("item-1"));
}

#[tokio::test]
async fn malformed_requests_are_api_errors() {
    let a = app();
    let (s, body) = a.raw(Method::POST, "/projects", Body::from("{not json")).await;
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    let (s, v, _) = a.call(Method::POST, "/projects", Some(json!({"script": "x", "extra": 1}))).await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
    let (s, v, _) = a.call(Method::GET, "/nowhere", None).await;
    assert_api_error(s, &v, ErrorCode::NotFound);
    let (s, v, _) = a.call(Method::PATCH, "/projects", None).await;
    assert_eq!(s.as_u16() / 100, 4);
    assert_eq!(v["code"], "invalid_input");
    let id = a.create("x").await;
    let (s, v, _) = a
        .call(Method::POST, &format!("/projects/{id}/research"), Some(json!({})))
        .await;
    assert_api_error(s, &v, ErrorCode::InvalidInput);
}

#[tokio::test]
async fn assets_round_trip_and_export_inline_them() {
    let a = app();
    let png = b"\x89PNG\r\n\x1a\nnot-really-a-png".to_vec();
    let (s, body) = a.raw(Method::POST, "/assets", Body::from(png.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let v: Value = serde_json::from_str(&body).unwrap();
    let asset = v["id"].as_str().unwrap().to_string();
    assert_eq!(v["content_type"], "image/png");

    let req = Request::get(format!("/assets/{asset}")).body(Body::empty()).unwrap();
    let resp = a.router.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    assert_eq!(resp.into_body().collect().await.unwrap().to_bytes().to_vec(), png);

    let (s, v, _) = a.call(Method::GET, &format!("/assets/{}", "0".repeat(64)), None).await;
    assert_api_error(s, &v, ErrorCode::NotFound);
    let (s, body) = a.raw(Method::POST, "/assets", Body::from("plain text")).await;
    assert_api_error(s, &serde_json::from_str(&body).unwrap(), ErrorCode::InvalidInput);

    let (id, _) = mace_pipeline(&a).await;
    let style = json!({"op": "update_style", "id": "item-4", "style": {"image": asset, "opacity": 0.5}});
    let (s, _, t) = a
        .call(Method::PUT, &format!("/projects/{id}/timeline"), Some(json!({"revision": 4, "edit": style})))
        .await;
    assert_eq!(s, StatusCode::OK, "{t}");
    let (s, doc) = a.raw(Method::GET, &format!("/projects/{id}/export"), Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let exported = Project::from_document(&doc).unwrap();
    assert_eq!(exported.assets[&asset].0, png);
    assert_eq!(exported.to_document().unwrap(), doc);
}
