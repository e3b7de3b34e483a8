//! HTTP backend for expert rating of sampled epochs.
//!
//! Writes go through one appender lock; reads clone an `Arc` snapshot of
//! the ratings so they never wait on file I/O.

use crate::error::CliError;
use crate::session::{load_store, RatingRecord, Session, SessionSample};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hypnokit_core::corpus::{rule_text, RUBRIC_JSON};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use tokio::io::AsyncWriteExt;
use tower_http::services::ServeDir;

pub const MAX_SCORE: i64 = 5;

pub struct AppState {
    session: Session,
    rubric: Value,
    ratings: RwLock<Arc<Vec<RatingRecord>>>,
    appender: tokio::sync::Mutex<tokio::fs::File>,
}

impl AppState {
    pub async fn open(session: Session, store: &Path) -> Result<Self, CliError> {
        let existing = load_store(store)?;
        if let Some(parent) = store.parent() {
            tokio::fs::create_dir_all(parent).await?;
        }
        let file = tokio::fs::OpenOptions::new().create(true).append(true).open(store).await?;
        let rubric = serde_json::from_str(RUBRIC_JSON).map_err(|e| CliError::Server(e.to_string()))?;
        Ok(AppState {
            session,
            rubric,
            ratings: RwLock::new(Arc::new(existing)),
            appender: tokio::sync::Mutex::new(file),
        })
    }

    fn snapshot(&self) -> Arc<Vec<RatingRecord>> {
        self.ratings.read().map(|g| Arc::clone(&g)).unwrap_or_default()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    rater: Option<String>,
}

fn sample_payload(s: &SessionSample, rubric: &Value) -> Value {
    let rules: Vec<Value> = s.rules.iter().map(|r| json!({ "id": r, "text": rule_text(*r) })).collect();
    json!({
        "sample_id": s.sample_id,
        "subject_id": s.subject_id,
        "epoch_index": s.epoch_index,
        "images": s.images.iter().map(|p| format!("/images/{p}")).collect::<Vec<_>>(),
        "stage": s.stage,
        "rules": rules,
        "rationale": s.rationale,
        "rubric": rubric,
    })
}

async fn next_sample(State(st): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    let Some(rater) = q.rater.filter(|r| !r.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "rater query parameter is required");
    };
    let ratings = st.snapshot();
    let done: HashSet<&str> =
        ratings.iter().filter(|r| r.rater == rater).map(|r| r.sample_id.as_str()).collect();
    let total = st.session.samples.len();
    let progress = json!({ "rated": done.len(), "total": total });
    match st.session.samples.iter().find(|s| !done.contains(s.sample_id.as_str())) {
        Some(s) => Json(json!({ "complete": false, "progress": progress, "sample": sample_payload(s, &st.rubric) }))
            .into_response(),
        None => Json(json!({ "complete": true, "progress": progress })).into_response(),
    }
}

#[derive(Debug, Deserialize)]
pub struct RatingRequest {
    pub sample_id: String,
    pub rater: String,
    pub scores: Vec<i64>,
}

async fn post_rating(State(st): State<Arc<AppState>>, Json(req): Json<RatingRequest>) -> Response {
    if req.rater.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "rater must be nonempty");
    }
    if req.scores.len() != 3 {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "exactly three scores are required");
    }
    if let Some(bad) = req.scores.iter().find(|s| !(0..=MAX_SCORE).contains(*s)) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("score {bad} is outside 0-{MAX_SCORE}"));
    }
    if !st.session.samples.iter().any(|s| s.sample_id == req.sample_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown sample {}", req.sample_id));
    }
    let record = RatingRecord {
        sample_id: req.sample_id,
        rater: req.rater,
        dim1: req.scores[0] as u8,
        dim2: req.scores[1] as u8,
        dim3: req.scores[2] as u8,
        timestamp: humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string(),
    };
    let mut file = st.appender.lock().await;
    if st.snapshot().iter().any(|r| r.sample_id == record.sample_id && r.rater == record.rater) {
        return error(StatusCode::CONFLICT, "this rater already rated this sample");
    }
    let mut line = match serde_json::to_string(&record) {
        Ok(l) => l,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    line.push('\n');
    if let Err(e) = async {
        file.write_all(line.as_bytes()).await?;
        file.flush().await
    }
    .await
    {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    if let Ok(mut g) = st.ratings.write() {
        let mut next = Vec::clone(&g);
        next.push(record.clone());
        *g = Arc::new(next);
    }
    drop(file);
    (StatusCode::CREATED, Json(record)).into_response()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub key: String,
    pub title: String,
    /// Counts of scores 0 through 5.
    pub histogram: [usize; 6],
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_ratings: usize,
    pub n_raters: usize,
    pub n_samples: usize,
    pub dimensions: Vec<DimensionSummary>,
}

/// Per-dimension histograms and means over the store.
pub fn summarize(ratings: &[RatingRecord], rubric: &Value, n_samples: usize) -> Summary {
    let dims = rubric["dimensions"].as_array().cloned().unwrap_or_default();
    let dimensions = (0..3)
        .map(|d| {
            let mut histogram = [0usize; 6];
            for r in ratings {
                histogram[r.scores()[d].min(5) as usize] += 1;
            }
            let n: usize = histogram.iter().sum();
            let total: usize = histogram.iter().enumerate().map(|(s, c)| s * c).sum();
            DimensionSummary {
                key: dims.get(d).and_then(|v| v["key"].as_str()).unwrap_or("").to_string(),
                title: dims.get(d).and_then(|v| v["title"].as_str()).unwrap_or("").to_string(),
                histogram,
                mean: (n > 0).then(|| total as f64 / n as f64),
            }
        })
        .collect();
    let raters: HashSet<&str> = ratings.iter().map(|r| r.rater.as_str()).collect();
    Summary { n_ratings: ratings.len(), n_raters: raters.len(), n_samples, dimensions }
}

async fn summary(State(st): State<Arc<AppState>>) -> Json<Summary> {
    Json(summarize(&st.snapshot(), &st.rubric, st.session.samples.len()))
}

async fn rubric(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(st.rubric.clone())
}

pub fn router(state: Arc<AppState>, images_root: Option<PathBuf>, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/api/session/next", get(next_sample))
        .route("/api/rating", post(post_rating))
        .route("/api/summary", get(summary))
        .route("/api/rubric", get(rubric))
        .with_state(state);
    if let Some(root) = images_root {
        app = app.nest_service("/images", ServeDir::new(root));
    }
    if let Some(ui) = ui_dir {
        app = app.fallback_service(ServeDir::new(ui));
    }
    app
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> Result<(), CliError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}
