use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use storymap_agents::{compile_for_script, BreakdownOptions, ItemEdit, Researcher};
use storymap_core::canonical::to_canonical_string;
use storymap_core::sequencer::{evaluate, export_stream};
use storymap_core::{apply_edit, validate_timeline, Asset, BlockArgs, Edit, MapStyle, Project, Timeline};

use crate::error::{ApiError, ErrorCode};
use crate::store::Stored;
use crate::AppState;

type Shared = Arc<AppState>;
type ApiResult = Result<Response, ApiError>;

/// Largest accepted request body (image uploads included).
pub const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;
pub const MAX_FPS: u32 = 240;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project).delete(delete_project))
        .route("/projects/{id}/breakdown", post(run_breakdown))
        .route("/projects/{id}/breakdown/regenerate", post(run_regenerate))
        .route("/projects/{id}/research", post(run_research))
        .route("/projects/{id}/blocks/{bid}/chat", post(run_chat))
        .route("/projects/{id}/compile", post(run_compile))
        .route("/projects/{id}/timeline", axum::routing::put(edit_timeline))
        .route("/projects/{id}/frame", get(frame))
        .route("/projects/{id}/frames", get(frames))
        .route("/projects/{id}/export", get(export))
        .route("/assets", post(upload_asset))
        .route("/assets/{id}", get(get_asset))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorCode::InvalidInput, "method not allowed for this endpoint")
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// A canonical structured-text response.
pub fn canonical<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    match to_canonical_string(value) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            [(header::CONTENT_TYPE, "application/json")],
            json!({"code": "internal", "message": e.to_string(), "detail": null}).to_string(),
        )
            .into_response(),
    }
}

fn ok<T: Serialize + ?Sized>(value: &T) -> ApiResult {
    Ok(canonical(StatusCode::OK, value))
}

fn parse_body<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|e| ApiError::invalid(e.body_text()))?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::invalid(format!("malformed request body: {e}")))
}

/// Runs an agent call, bounded by the live-mode timeout.
async fn agent<T, E>(state: &AppState, fut: impl Future<Output = Result<T, E>>) -> Result<T, ApiError>
where
    ApiError: From<E>,
{
    match state.agent_timeout() {
        None => Ok(fut.await?),
        Some(limit) => match tokio::time::timeout(limit, fut).await {
            Ok(r) => Ok(r?),
            Err(_) => Err(ApiError::new(
                ErrorCode::AgentFailed,
                format!("agent did not answer within {} s", limit.as_secs()),
            )),
        },
    }
}

/// Loads the project and rejects a stale revision before any work is done.
fn at_revision(state: &AppState, id: &str, revision: u64) -> Result<Arc<Stored>, ApiError> {
    let snap = state.store.load(id)?;
    if snap.revision != revision {
        return Err(ApiError::new(
            ErrorCode::Conflict,
            format!("project `{id}` is at revision {}, not {revision}", snap.revision),
        )
        .with_detail(json!({ "revision": snap.revision })));
    }
    Ok(snap)
}

async fn commit(state: &AppState, revision: u64, mut project: Project) -> Result<Arc<Stored>, ApiError> {
    project.modified_at = state.now_ms();
    Ok(state.store.save(revision, project).await?)
}

async fn healthz(State(state): State<Shared>) -> ApiResult {
    ok(&json!({"status": "ok", "mode": state.gateway.mode().as_str()}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    script: String,
    #[serde(default)]
    map_style: Option<MapStyle>,
}

async fn create_project(State(state): State<Shared>, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let req: CreateProject = parse_body(body)?;
    let mut project = Project::new(state.next_id(), req.script, state.now_ms());
    if let Some(style) = req.map_style {
        project.timeline.map_style = style;
    }
    // Ids restart after a restart with a fixed clock; skip ones already taken.
    let stored = loop {
        match state.store.create(project.clone()).await {
            Err(crate::StoreError::Exists(_)) => project.id = state.next_id(),
            other => break other?,
        }
    };
    Ok(canonical(StatusCode::CREATED, &*stored))
}

async fn list_projects(State(state): State<Shared>) -> ApiResult {
    ok(&json!({ "projects": state.store.list()? }))
}

async fn get_project(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok(&*state.store.load(&id)?)
}

async fn delete_project(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    state.store.delete(&id).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BreakdownRequest {
    revision: u64,
    #[serde(default)]
    options: BreakdownOptions,
}

async fn run_breakdown(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: BreakdownRequest = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    let plan = agent(&state, storymap_agents::breakdown(&state.gateway, &snap.project.script, &req.options)).await?;
    let mut project = snap.project.clone();
    project.breakdown = plan;
    // A fresh plan reuses ids, so earlier research and timing no longer apply.
    project.sessions.clear();
    project.timeline = Timeline {
        blocks: Vec::new(),
        map_style: project.timeline.map_style,
    };
    let stored = commit(&state, req.revision, project).await?;
    ok(&json!({"revision": stored.revision, "breakdown": stored.project.breakdown}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegenerateRequest {
    revision: u64,
    edits: Vec<ItemEdit>,
    #[serde(default)]
    options: BreakdownOptions,
}

async fn run_regenerate(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: RegenerateRequest = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    let p = &snap.project;
    if p.breakdown.items.is_empty() {
        return Err(ApiError::invalid("project has no breakdown to regenerate"));
    }
    let plan = agent(
        &state,
        storymap_agents::regenerate(&state.gateway, &p.breakdown, &req.edits, &p.script, &req.options),
    )
    .await?;
    let mut project = p.clone();
    project
        .sessions
        .retain(|k, _| plan.item(k).is_some() || project.timeline.block(k).is_some());
    project.breakdown = plan;
    let stored = commit(&state, req.revision, project).await?;
    ok(&json!({"revision": stored.revision, "breakdown": stored.project.breakdown}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RevisionOnly {
    revision: u64,
}

async fn run_research(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: RevisionOnly = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    if snap.project.breakdown.items.is_empty() {
        return Err(ApiError::invalid("project has no breakdown to research"));
    }
    let researcher = Researcher::new(&state.gateway, &state.geocoder);
    let (plan, sessions) = agent(&state, researcher.research_all(&snap.project.breakdown)).await?;
    let mut project = snap.project.clone();
    project.breakdown = plan;
    for s in sessions {
        project.sessions.insert(s.block_id.clone(), s);
    }
    let stored = commit(&state, req.revision, project).await?;
    let p = &stored.project;
    let unresolved: Vec<_> = p
        .breakdown
        .items
        .iter()
        .filter(|i| !i.resolved)
        .map(|i| {
            let error = p.sessions.get(&i.id).and_then(|s| s.error.clone());
            json!({"id": i.id, "error": error})
        })
        .collect();
    if !unresolved.is_empty() {
        // Progress is kept; the caller needs the new revision to continue.
        return Err(ApiError::new(
            ErrorCode::AgentFailed,
            format!("{} block(s) could not be resolved", unresolved.len()),
        )
        .with_detail(json!({"revision": stored.revision, "unresolved": unresolved})));
    }
    ok(&json!({"revision": stored.revision, "breakdown": p.breakdown, "sessions": p.sessions}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    revision: u64,
    message: String,
}

async fn run_chat(
    State(state): State<Shared>,
    Path((id, bid)): Path<(String, String)>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: ChatRequest = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    let p = &snap.project;
    let item = p
        .breakdown
        .item(&bid)
        .ok_or_else(|| ApiError::not_found(format!("block `{bid}` not found")))?;
    let session = p
        .sessions
        .get(&bid)
        .ok_or_else(|| ApiError::invalid(format!("block `{bid}` has not been researched yet")))?;
    let researcher = Researcher::new(&state.gateway, &state.geocoder);
    let turn = agent(&state, researcher.chat(session, item, &req.message)).await?;

    let mut project = p.clone();
    if turn.updated.is_some() {
        if let (Some(args), Some(n)) = (&turn.item.args, project.timeline.blocks.iter().position(|b| b.id == bid)) {
            let block = &mut project.timeline.blocks[n];
            if block.kind() == args.kind() {
                block.args = args.clone();
                block.style = turn.item.style.clone();
            }
        }
    }
    *project.breakdown.item_mut(&bid).expect("checked above") = turn.item.clone();
    project.sessions.insert(bid.clone(), turn.session.clone());
    let stored = commit(&state, req.revision, project).await?;
    ok(&json!({
        "revision": stored.revision,
        "reply": turn.reply,
        "updated": turn.updated.is_some(),
        "item": stored.project.breakdown.item(&bid),
        "session": stored.project.sessions.get(&bid),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompileRequest {
    revision: u64,
    #[serde(default)]
    options: BreakdownOptions,
}

async fn run_compile(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: CompileRequest = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    let mut timeline = compile_for_script(&snap.project.breakdown, &snap.project.script, &req.options)?;
    timeline.map_style = snap.project.timeline.map_style;
    let mut project = snap.project.clone();
    project.timeline = timeline;
    let stored = commit(&state, req.revision, project).await?;
    let t = &stored.project.timeline;
    ok(&json!({"revision": stored.revision, "timeline": t, "report": validate_timeline(t)}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TimelineRequest {
    revision: u64,
    edit: Edit,
}

async fn edit_timeline(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let req: TimelineRequest = parse_body(body)?;
    let snap = at_revision(&state, &id, req.revision)?;
    let mut project = snap.project.clone();
    project.timeline = apply_edit(&snap.project.timeline, &req.edit)?;
    // Keep the breakdown item in step with direct argument edits.
    if let Edit::UpdateArgs { id: bid, args } = &req.edit {
        if let Some(item) = project.breakdown.item_mut(bid) {
            if item.kind == args.kind() {
                item.args = Some(args.clone());
            }
        }
    }
    let stored = commit(&state, req.revision, project).await?;
    let t = &stored.project.timeline;
    ok(&json!({"revision": stored.revision, "timeline": t, "report": validate_timeline(t)}))
}

fn query_param<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    q.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::invalid(format!("query parameter `{key}` has bad value {v:?}")))
        })
        .transpose()
}

async fn frame(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let t: f64 = query_param(&q, "t")?.ok_or_else(|| ApiError::invalid("query parameter `t` is required"))?;
    if !t.is_finite() {
        return Err(ApiError::invalid("`t` must be finite"));
    }
    let snap = state.store.load(&id)?;
    let text = evaluate(&snap.project.timeline, t)
        .to_canonical()
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn frames(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let fps: u32 = query_param(&q, "fps")?.unwrap_or(30);
    if !(1..=MAX_FPS).contains(&fps) {
        return Err(ApiError::invalid(format!("fps must be between 1 and {MAX_FPS}")));
    }
    let snap = state.store.load(&id)?;
    let text = tokio::task::spawn_blocking(move || export_stream(&snap.project.timeline, fps))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

/// Asset ids referenced by block styles and sprites.
fn referenced_assets(t: &Timeline) -> Vec<&str> {
    let mut ids = Vec::new();
    for b in &t.blocks {
        ids.extend(b.style.image.as_deref());
        match &b.args {
            BlockArgs::ElementRoute { sprite: Some(s), .. } => ids.push(s.as_str()),
            BlockArgs::ElementAuxiliaryMotion { sprite, .. } => ids.push(sprite.as_str()),
            _ => {}
        }
    }
    ids
}

async fn export(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let snap = state.store.load(&id)?;
    let mut project = snap.project.clone();
    let mut inlined = BTreeMap::new();
    for asset in referenced_assets(&project.timeline) {
        if let Some(bytes) = state
            .assets
            .get(asset)
            .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
        {
            inlined.insert(asset.to_string(), Asset(bytes));
        }
    }
    project.assets.extend(inlined);
    let text = project
        .to_document()
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn upload_asset(State(state): State<Shared>, body: Result<Bytes, BytesRejection>) -> ApiResult {
    let bytes = body.map_err(|e| ApiError::invalid(e.body_text()))?;
    let content_type = crate::assets::sniff(&bytes)
        .ok_or_else(|| ApiError::invalid("upload is not a PNG, JPEG, GIF, WebP or SVG image"))?;
    let id = state
        .assets
        .put(&bytes)
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    Ok(canonical(
        StatusCode::CREATED,
        &json!({"id": id, "content_type": content_type, "size": bytes.len()}),
    ))
}

async fn get_asset(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let bytes = state
        .assets
        .get(&id)
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
        .ok_or_else(|| ApiError::not_found(format!("asset `{id}` not found")))?;
    let content_type = crate::assets::sniff(&bytes).unwrap_or("application/octet-stream");
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}
