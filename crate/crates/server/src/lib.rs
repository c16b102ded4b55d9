//! HTTP front end of the human-evaluation collection service.
//!
//! All state lives in a [`CampaignState`]; judgment appends take the write
//! lock, so they are serialized through a single writer, while task, progress
//! and report requests share the read lock.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ldwb_core::humaneval::{Campaign, CampaignState, Journal, JudgmentRecord, ServiceError};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Shared service state: at most one campaign, plus where its journal lives.
#[derive(Debug, Default)]
pub struct AppState {
    campaign: RwLock<Option<CampaignState>>,
    journal_path: Option<PathBuf>,
}

impl AppState {
    /// `journal_path = None` keeps judgments in memory only.
    pub fn new(journal_path: Option<PathBuf>) -> Self {
        AppState {
            campaign: RwLock::new(None),
            journal_path,
        }
    }

    /// Starts with a campaign already loaded (and its journal replayed).
    pub fn with_campaign(campaign: Campaign, journal_path: Option<PathBuf>) -> Result<Self, ApiError> {
        let state = AppState::new(journal_path);
        state.load(campaign)?;
        Ok(state)
    }

    fn load(&self, campaign: Campaign) -> Result<CampaignSummary, ApiError> {
        let mut slot = self.campaign.write();
        if slot.is_some() {
            return Err(ApiError::new(StatusCode::CONFLICT, "a campaign is already loaded"));
        }
        let journal = match &self.journal_path {
            Some(path) => Journal::open(path).map_err(|e| ApiError::from(ServiceError::from(e)))?,
            None => Journal::in_memory(),
        };
        let state = CampaignState::new(campaign, journal)?;
        let summary = CampaignSummary {
            workers: state.campaign().workers.len(),
            histories: state.campaign().histories.len(),
            candidates: state.campaign().candidates().count(),
            tasks: state.plan().values().map(Vec::len).sum(),
            judgments: state.journal().records().len(),
        };
        *slot = Some(state);
        Ok(summary)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CampaignSummary {
    pub workers: usize,
    pub histories: usize,
    pub candidates: usize,
    pub tasks: usize,
    /// Judgments replayed from an existing journal.
    pub judgments: usize,
}

/// JSON error body with a status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let status = match &e {
            Campaign(_) | Invalid(_) => StatusCode::BAD_REQUEST,
            Plan(_) => StatusCode::UNPROCESSABLE_ENTITY,
            UnknownWorker(_) | UnknownCandidate(_) => StatusCode::NOT_FOUND,
            QualificationPending(_) | NotQualified(_) | Unassigned { .. } => StatusCode::FORBIDDEN,
            Duplicate { .. } => StatusCode::CONFLICT,
            Majority(_) | Kappa(_) => StatusCode::CONFLICT,
            Journal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<AppState>;

fn no_campaign() -> ApiError {
    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no campaign loaded")
}

fn read<T>(state: &AppState, f: impl FnOnce(&CampaignState) -> Result<T, ApiError>) -> Result<T, ApiError> {
    let guard = state.campaign.read();
    f(guard.as_ref().ok_or_else(no_campaign)?)
}

#[derive(Debug, Deserialize)]
struct WorkerQuery {
    worker: String,
}

async fn next_task(State(state): State<Shared>, Query(q): Query<WorkerQuery>) -> Result<Response, ApiError> {
    read(&state, |s| {
        Ok(match s.next_task(&q.worker)? {
            Some(task) => Json(task).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        })
    })
}

async fn submit(State(state): State<Shared>, Json(record): Json<JudgmentRecord>) -> Result<Response, ApiError> {
    let mut guard = state.campaign.write();
    let campaign = guard.as_mut().ok_or_else(no_campaign)?;
    let ack = campaign.submit(record)?;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn progress(State(state): State<Shared>, Query(q): Query<WorkerQuery>) -> Result<Response, ApiError> {
    read(&state, |s| Ok(Json(s.progress(&q.worker)?).into_response()))
}

async fn create_campaign(State(state): State<Shared>, Json(campaign): Json<Campaign>) -> Result<Response, ApiError> {
    let summary = state.load(campaign)?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn export(State(state): State<Shared>) -> Result<Response, ApiError> {
    read(&state, |s| {
        Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], s.export()).into_response())
    })
}

async fn report(State(state): State<Shared>, Path(kind): Path<String>) -> Result<Response, ApiError> {
    read(&state, |s| {
        Ok(match kind.as_str() {
            "majority" => Json(s.majority_report()?).into_response(),
            "kappa" => Json(s.kappa_report()?).into_response(),
            "errors" => Json(s.error_report()).into_response(),
            other => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    format!("unknown report `{other}` (majority|kappa|errors)"),
                ))
            }
        })
    })
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/task/next", get(next_task))
        .route("/judgment", post(submit))
        .route("/progress", get(progress))
        .route("/campaign", post(create_campaign))
        .route("/export", get(export))
        .route("/reports/{kind}", get(report))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(addr, state))
}
