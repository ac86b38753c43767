//! HTTP front end of the personalized warehouse. Every route lives under
//! `/api/v1`; bodies are JSON and every failure is an [`ApiError`].

pub mod error;
pub mod state;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use pw_core::view::{group_profile, view_stats};
use pw_core::{parse_query, route, Error, Profile};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

pub use error::{ApiError, ApiResult, ErrorCode};
pub use state::AppState;
use state::ViewSummary;

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/users", post(register))
        .route("/sessions", post(login))
        .route("/users/{id}/profile", put(save_profile))
        .route("/users/{id}/personalization", put(personalization))
        .route("/users/{id}/view/rebuild", post(rebuild))
        .route("/users/{id}/view/stats", get(stats))
        .route("/users/{id}/view/status", get(status))
        .route("/query", post(query))
        .route("/admin/ingest", post(ingest));
    Router::new()
        .nest("/api/v1", api)
        .fallback(no_route)
        .method_not_allowed_fallback(no_route)
        .with_state(state)
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// Parses a JSON body by hand so malformed input yields `BAD_REQUEST` in the
/// documented shape instead of the framework's plain-text rejection.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::bad_request(format!("malformed request body: {e}"))
            .with_detail(json!({ "line": e.line(), "column": e.column() }))
    })
}

fn bearer(headers: &HeaderMap) -> ApiResult<&str> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::unauthenticated("missing bearer token"))
}

/// Resolves the session token and checks it belongs to `user_id`.
fn authorize(state: &AppState, headers: &HeaderMap, user_id: &str) -> ApiResult<String> {
    let token = bearer(headers)?;
    if state.session(token)?.user_id != user_id {
        return Err(ApiError::unauthenticated("session belongs to another user"));
    }
    Ok(token.to_string())
}

fn rebuild_hint(user_id: &str) -> String {
    format!("POST /api/v1/users/{user_id}/view/rebuild")
}

fn view_json(state: &AppState, token: &str) -> ApiResult<Value> {
    let session = state.session(token)?;
    let ds = state.snapshot();
    Ok(match session.view() {
        Some(v) if session.personalization_enabled => json!(ViewSummary::of(v, &ds)),
        _ => Value::Null,
    })
}

#[derive(Deserialize)]
struct Credentials {
    user_id: String,
    passphrase: String,
}

async fn register(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let c: Credentials = parse_body(&body)?;
    let record = state.store().register_user(&c.user_id, &c.passphrase)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "user_id": record.user_id,
            "created_at": record.created_at,
            "experienced": record.experienced,
        })),
    ))
}

async fn login(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let c: Credentials = parse_body(&body)?;
    let ds = state.snapshot();
    let session = state.store().authenticate(&c.user_id, &c.passphrase, &ds)?;
    let needs_onboarding = session.needs_onboarding;
    let token = state.open_session(session);
    let build = state.ensure_view(&token)?.map(|(t, _)| t);
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "token": token,
            "user_id": c.user_id,
            "needs_onboarding": needs_onboarding,
            "view": view_json(&state, &token)?,
            "build": build,
        })),
    ))
}

async fn save_profile(
    State(state): State<AppState>,
    Path(user_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let token = authorize(&state, &headers, &user_id)?;
    let mut doc: Value = parse_body(&body)?;
    let Some(obj) = doc.as_object_mut() else {
        return Err(ApiError::bad_request("profile must be a JSON object"));
    };
    match obj.get("user_id") {
        None => {
            obj.insert("user_id".into(), json!(user_id));
        }
        Some(Value::String(id)) if *id == user_id => {}
        Some(_) => return Err(ApiError::bad_request("profile user_id does not match the path")),
    }
    let doc = serde_json::from_value(doc).map_err(|e| ApiError::bad_request(format!("malformed profile: {e}")))?;
    let (profile, warnings) = Profile::from_doc(doc)?;
    let ds = state.snapshot();
    let saved = state.store().save_profile(profile, warnings, &ds)?;
    state.update_user_sessions(&user_id, |s| {
        s.set_profile(Some(saved.profile.clone()));
        s.needs_onboarding = false;
    });
    let build = state.ensure_view(&token)?;
    Ok(Json(json!({
        "profile_hash": saved.profile.profile_hash,
        "rebuild_enqueued": build.as_ref().is_some_and(|(_, new)| *new),
        "build": build.map(|(t, _)| t),
        "warnings": saved.warnings,
    })))
}

#[derive(Deserialize)]
struct PersonalizationSetting {
    enabled: bool,
    degree: Option<f64>,
    /// Other members of a shared group view; empty leaves the group.
    group: Option<Vec<String>>,
}

async fn personalization(
    State(state): State<AppState>,
    Path(user_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let token = authorize(&state, &headers, &user_id)?;
    let setting: PersonalizationSetting = parse_body(&body)?;
    let group = match &setting.group {
        Some(members) if !members.is_empty() => {
            let store = state.store();
            let mut profiles = Vec::new();
            for id in std::iter::once(&user_id).chain(members.iter().filter(|m| **m != user_id)) {
                let p = store.profile(id).ok_or_else(|| ApiError::not_found(format!("no profile for `{id}`")))?;
                profiles.push(p.clone());
            }
            Some(Some(group_profile(&profiles)?))
        }
        Some(_) => Some(None),
        None => None,
    };
    state.update_session(&token, |s| -> ApiResult<()> {
        if setting.enabled {
            if let Some(d) = setting.degree {
                s.set_degree(d)?;
            }
        }
        if let Some(g) = group {
            s.set_group(g);
        }
        s.personalization_enabled = setting.enabled;
        Ok(())
    })??;
    let build = state.ensure_view(&token)?.map(|(t, _)| t);
    let session = state.session(&token)?;
    Ok(Json(json!({
        "enabled": session.personalization_enabled,
        "degree": session.degree(),
        "view": view_json(&state, &token)?,
        "build": build,
    })))
}

async fn rebuild(
    State(state): State<AppState>,
    Path(user_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let token = authorize(&state, &headers, &user_id)?;
    let session = state.session(&token)?;
    if session.profile.is_none() && session.group.is_none() {
        return Err(ApiError::not_found(format!("`{user_id}` has no profile")));
    }
    let (ticket, created) = state.enqueue_build(session.target_profile()?);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "ticket": ticket, "coalesced": !created })),
    ))
}

async fn stats(
    State(state): State<AppState>,
    Path(user_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let token = authorize(&state, &headers, &user_id)?;
    let session = state.session(&token)?;
    let view = session
        .view()
        .ok_or_else(|| ApiError::not_found("no view is bound yet").with_detail(json!({ "rebuild": rebuild_hint(&user_id) })))?;
    Ok(Json(view_stats(view, &state.snapshot())))
}

async fn status(
    State(state): State<AppState>,
    Path(user_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let token = authorize(&state, &headers, &user_id)?;
    let session = state.session(&token)?;
    let target = session.target_profile()?;
    Ok(Json(json!({
        "personalization_enabled": session.personalization_enabled,
        "degree": session.degree(),
        "target_owner": target.user_id,
        "target_profile_hash": target.profile_hash,
        "effective_preferences": target.preferences.len(),
        "view": view_json(&state, &token)?,
        "build": state.latest_ticket(&target.user_id),
    })))
}

#[derive(Deserialize)]
struct QueryBody {
    text: String,
}

async fn query(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<impl IntoResponse> {
    let token = bearer(&headers)?.to_string();
    let q: QueryBody = parse_body(&body)?;
    let session = state.session(&token)?;
    let ds = state.snapshot();
    let user_id = session.user_id.clone();
    let answered = tokio::task::spawn_blocking(move || {
        let q = parse_query(&q.text, &ds)?;
        route(&q, &session, &ds)
    })
    .await
    .map_err(|e| ApiError::internal(format!("query task failed: {e}")))?;
    match answered {
        Ok(r) => Ok(Json(r.to_json())),
        Err(e @ (Error::StaleView { .. } | Error::NoViewBound(_))) => {
            let mut err = ApiError::from(e);
            if let Some(obj) = err.detail.as_object_mut() {
                obj.insert("rebuild".into(), json!(rebuild_hint(&user_id)));
            }
            Err(err)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Deserialize)]
struct IngestBody {
    table: String,
    csv: String,
}

async fn ingest(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: IngestBody = parse_body(&body)?;
    let table = b.table.clone();
    let worker = state.clone();
    let (rows, generation, stale) = tokio::task::spawn_blocking(move || worker.ingest(&b.table, &b.csv))
        .await
        .map_err(|e| ApiError::internal(format!("ingest task failed: {e}")))??;
    Ok(Json(json!({
        "table": table,
        "rows": rows,
        "generation": generation,
        "views_marked_stale": stale,
    })))
}

/// Serves `state` on an already bound listener until the process stops.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
