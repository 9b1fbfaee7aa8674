//! HTTP API used by the review interface.
//!
//! | method | path                                  |                          |
//! |--------|---------------------------------------|--------------------------|
//! | GET    | `/sessions`                           | session summaries        |
//! | GET    | `/sessions/{id}`                      | summary and history      |
//! | GET    | `/sessions/{id}/items`                | items with decisions     |
//! | POST   | `/sessions/{id}/items/{key}/decision` | record a decision        |
//! | POST   | `/sessions/{id}/export`               | links of a done session  |
//! | GET    | `/blacklist`                          | blacklisted surfaces     |
//! | POST   | `/blacklist`                          | blacklist a surface      |
//!
//! Every mutation is on disk before the response is sent.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dataref_core::dictionary::load_blacklist;
use dataref_core::review::{export_links, LinksDocument, SessionStore, SessionSummary};
use dataref_core::{Choice, Dictionary, Error, MatchDecision, ReviewItem};
use serde::{Deserialize, Serialize};

#[derive(Clone)]
pub struct AppState {
    pub store: SessionStore,
    pub blacklist: PathBuf,
    /// Dictionary whose entries are flagged alongside the blacklist file.
    pub dictionary: Option<PathBuf>,
    blacklist_lock: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(store: SessionStore, blacklist: PathBuf, dictionary: Option<PathBuf>) -> Self {
        AppState {
            store,
            blacklist,
            dictionary,
            blacklist_lock: Arc::default(),
        }
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownSession(_) | Error::UnknownItem { .. } => StatusCode::NOT_FOUND,
            Error::InvalidDecision(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::IncompleteSession(_) | Error::SessionExists(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking file work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/items", get(get_items))
        .route("/sessions/{id}/items/{key}/decision", post(post_decision))
        .route("/sessions/{id}/export", post(post_export))
        .route("/blacklist", get(get_blacklist).post(post_blacklist))
        .with_state(state)
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Vec<SessionSummary>> {
    blocking(move || state.store.summaries()).await.map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDetail {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub history: Vec<MatchDecision>,
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionDetail> {
    let session = blocking(move || state.store.load(&id)).await?;
    Ok(Json(SessionDetail {
        summary: SessionSummary::from(&session),
        history: session.history,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemView {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub decision: Option<MatchDecision>,
}

async fn get_items(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<ItemView>> {
    let session = blocking(move || state.store.load(&id)).await?;
    let views = session
        .items
        .iter()
        .map(|item| ItemView {
            item: item.clone(),
            decision: session.decision(&item.key).cloned(),
        })
        .collect();
    Ok(Json(views))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub choice: Choice,
    #[serde(default)]
    pub decided_by: Option<String>,
}

async fn post_decision(
    State(state): State<AppState>,
    Path((id, key)): Path<(String, String)>,
    Json(body): Json<DecisionRequest>,
) -> ApiResult<MatchDecision> {
    let by = body.decided_by.unwrap_or_else(|| "expert".into());
    blocking(move || state.store.decide(&id, &key, body.choice, &by))
        .await
        .map(Json)
}

async fn post_export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<LinksDocument> {
    blocking(move || export_links(&state.store.load(&id)?)).await.map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Blacklist {
    pub surfaces: BTreeSet<String>,
}

async fn get_blacklist(State(state): State<AppState>) -> ApiResult<Blacklist> {
    blocking(move || load_blacklist(&state.blacklist).map(|surfaces| Blacklist { surfaces }))
        .await
        .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlacklistRequest {
    pub surface: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BlacklistResponse {
    pub surface: String,
    /// False when the surface was already blacklisted.
    pub added: bool,
}

async fn post_blacklist(
    State(state): State<AppState>,
    Json(body): Json<BlacklistRequest>,
) -> Result<(StatusCode, Json<BlacklistResponse>), ApiError> {
    let surface = body.surface.trim().to_string();
    if surface.is_empty() || surface.contains(['\n', '\t']) {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "invalid surface".into()));
    }
    let added = blocking({
        let surface = surface.clone();
        move || add_to_blacklist(&state, &surface)
    })
    .await?;
    let status = if added { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(BlacklistResponse { surface, added })))
}

/// Appends `surface` to the blacklist file and flags it in the dictionary.
/// Returns false if it was already listed.
pub fn add_to_blacklist(state: &AppState, surface: &str) -> Result<bool, Error> {
    let _guard = state.blacklist_lock.lock().expect("blacklist lock poisoned");
    let path = &state.blacklist;
    let known = load_blacklist(path)?;
    if known.contains(surface) {
        return Ok(false);
    }
    let needs_newline = fs::read(path)
        .map(|b| b.last().is_some_and(|&c| c != b'\n'))
        .unwrap_or(false);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = format!("{}{surface}\n", if needs_newline { "\n" } else { "" });
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.sync_data().map_err(|e| Error::io(path, e))?;

    if let Some(dict_path) = state.dictionary.as_ref().filter(|p| p.exists()) {
        let mut dict = Dictionary::load(dict_path)?;
        if dict.blacklist(surface) {
            dict.save(dict_path)?;
        }
    }
    Ok(true)
}

/// Serves the API on `listen` until interrupted.
pub async fn serve(listen: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|e| anyhow::anyhow!("cannot listen on {listen}: {e}"))?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
