//! Rating-task assignment for human annotators.
//!
//! [`AnnotationService`] holds the assignment state; [`router`] exposes it
//! over HTTP. Every accepted rating is appended to a JSONL log (one
//! `rating` record per line, flushed before the acknowledgement), and the
//! state is rebuilt from the dataset plus that log on startup.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use ifjudge_core::dataset::{content_id, Record};
use ifjudge_core::{Dataset, HumanRating};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::services::ServeDir;

/// Ratings per answer the assignment policy aims for.
pub const TARGET_RATINGS: usize = 3;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("malformed annotator id: {0}")]
    BadAnnotator(String),
    #[error("unknown task '{0}' for this annotator")]
    UnknownTask(String),
    #[error("invalid rating: {0}")]
    Invalid(String),
    #[error("annotator '{annotator}' already rated answer '{answer}'")]
    Duplicate { answer: String, annotator: String },
    #[error("ratings log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AnnotateError {
    fn status(&self) -> StatusCode {
        match self {
            AnnotateError::BadAnnotator(_) => StatusCode::BAD_REQUEST,
            AnnotateError::UnknownTask(_) => StatusCode::NOT_FOUND,
            AnnotateError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotateError::Duplicate { .. } => StatusCode::CONFLICT,
            AnnotateError::Log { .. } | AnnotateError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub answer_id: String,
    pub document: String,
    pub instruction: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSummary {
    pub total_answers: usize,
    pub answers_with_target: usize,
    pub total_ratings: usize,
    pub ratings_per_annotator: BTreeMap<String, usize>,
}

/// Task ids are derived from the (answer, annotator) pair, so they are
/// stable across restarts without being stored.
pub fn task_id(answer_id: &str, annotator_id: &str) -> String {
    content_id("task", &[answer_id, annotator_id])
}

pub fn check_annotator(id: &str) -> Result<(), AnnotateError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.' | '@'));
    if ok {
        Ok(())
    } else {
        Err(AnnotateError::BadAnnotator(id.chars().take(140).collect()))
    }
}

struct Assignments {
    /// answer id → annotators who rated it
    raters: BTreeMap<String, BTreeSet<String>>,
    per_annotator: BTreeMap<String, usize>,
    log: File,
}

pub struct AnnotationService {
    dataset: Dataset,
    state: Mutex<Assignments>,
}

impl AnnotationService {
    /// Load `dataset` and replay the ratings log at `log_path` (created if
    /// missing). A trailing partial line left by an interrupted write is cut
    /// off.
    pub fn open(dataset: Dataset, log_path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        let log_path = log_path.as_ref();
        let mut raters: BTreeMap<String, BTreeSet<String>> =
            dataset.answers().map(|a| (a.id.clone(), BTreeSet::new())).collect();
        let mut per_annotator: BTreeMap<String, usize> = BTreeMap::new();
        let mut record = |r: &HumanRating| {
            if let Some(set) = raters.get_mut(&r.answer_id) {
                if set.insert(r.annotator_id.clone()) {
                    *per_annotator.entry(r.annotator_id.clone()).or_default() += 1;
                }
            }
        };
        for r in dataset.ratings() {
            record(r);
        }
        if log_path.exists() {
            let bytes = std::fs::read(log_path)?;
            let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                OpenOptions::new().write(true).open(log_path)?.set_len(complete as u64)?;
            }
            for (i, line) in BufReader::new(&bytes[..complete]).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let err = |message: String| AnnotateError::Log { line: i + 1, message };
                match serde_json::from_str::<Record>(&line).map_err(|e| err(e.to_string()))? {
                    Record::Rating(r) => {
                        if dataset.answer(&r.answer_id).is_none() {
                            return Err(err(format!("unknown answer '{}'", r.answer_id)));
                        }
                        record(&r);
                    }
                    _ => return Err(err("expected a rating record".into())),
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(Self {
            dataset,
            state: Mutex::new(Assignments {
                raters,
                per_annotator,
                log,
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Assignments> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// The least-rated answer this annotator has not rated (ties by answer
    /// id), or `None` when nothing is left.
    pub fn next_task(&self, annotator_id: &str) -> Result<Option<AnnotationTask>, AnnotateError> {
        check_annotator(annotator_id)?;
        let state = self.lock();
        let pick = state
            .raters
            .iter()
            .filter(|(_, who)| !who.contains(annotator_id))
            .min_by(|(a, x), (b, y)| x.len().cmp(&y.len()).then_with(|| a.cmp(b)))
            .map(|(id, _)| id.clone());
        drop(state);
        Ok(pick.map(|answer_id| {
            let answer = self.dataset.answer(&answer_id).expect("state mirrors dataset");
            let document = self.dataset.document(&answer.document_id).expect("validated dataset");
            let instruction = self.dataset.instruction(&answer.instruction_id).expect("validated dataset");
            AnnotationTask {
                task_id: task_id(&answer_id, annotator_id),
                document: document.text.clone(),
                instruction: instruction.text.clone(),
                answer: answer.text.clone(),
                answer_id,
            }
        }))
    }

    /// Validate and log a rating. Returns once the log line is flushed.
    pub fn submit(
        &self,
        task: &str,
        annotator_id: &str,
        follows_instruction: u8,
        how_well: u8,
    ) -> Result<HumanRating, AnnotateError> {
        check_annotator(annotator_id)?;
        if follows_instruction > 1 {
            return Err(AnnotateError::Invalid(format!(
                "follows_instruction must be yes or no, got {follows_instruction}"
            )));
        }
        if !(1..=5).contains(&how_well) {
            return Err(AnnotateError::Invalid(format!("how_well must be 1 to 5, got {how_well}")));
        }
        let mut state = self.lock();
        let answer_id = state
            .raters
            .keys()
            .find(|a| task_id(a, annotator_id) == task)
            .cloned()
            .ok_or_else(|| AnnotateError::UnknownTask(task.into()))?;
        if state.raters[&answer_id].contains(annotator_id) {
            return Err(AnnotateError::Duplicate {
                answer: answer_id,
                annotator: annotator_id.into(),
            });
        }
        let rating = HumanRating {
            answer_id: answer_id.clone(),
            annotator_id: annotator_id.into(),
            follows_instruction,
            how_well,
            timestamp: Utc::now(),
        };
        let line = serde_json::to_string(&Record::Rating(rating.clone())).expect("rating serializes");
        writeln!(state.log, "{line}")?;
        state.log.flush()?;
        state.log.sync_data()?;
        state
            .raters
            .get_mut(&answer_id)
            .expect("found above")
            .insert(annotator_id.into());
        *state.per_annotator.entry(annotator_id.into()).or_default() += 1;
        Ok(rating)
    }

    pub fn progress(&self) -> ProgressSummary {
        let state = self.lock();
        ProgressSummary {
            total_answers: state.raters.len(),
            answers_with_target: state.raters.values().filter(|r| r.len() >= TARGET_RATINGS).count(),
            total_ratings: state.per_annotator.values().sum(),
            ratings_per_annotator: state.per_annotator.clone(),
        }
    }

    /// Ratings count per answer id.
    pub fn coverage(&self) -> BTreeMap<String, usize> {
        self.lock().raters.iter().map(|(k, v)| (k.clone(), v.len())).collect()
    }
}

#[derive(Deserialize)]
struct NextQuery {
    annotator_id: Option<String>,
}

async fn next_handler(
    State(svc): State<Arc<AnnotationService>>,
    Query(q): Query<NextQuery>,
) -> Result<Json<Value>, AnnotateError> {
    let annotator = q.annotator_id.unwrap_or_default();
    let task = svc.next_task(&annotator)?;
    Ok(Json(match task {
        Some(t) => json!({"status": "ok", "task": t}),
        None => json!({"status": "no_task"}),
    }))
}

fn parse_follows(v: &Value) -> Result<u8, AnnotateError> {
    match v {
        Value::String(s) if s.eq_ignore_ascii_case("yes") => Ok(1),
        Value::String(s) if s.eq_ignore_ascii_case("no") => Ok(0),
        Value::Bool(b) => Ok(u8::from(*b)),
        Value::Number(n) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => Ok(n.as_u64().unwrap_or(0) as u8),
        other => Err(AnnotateError::Invalid(format!("follows_instruction must be \"yes\" or \"no\", got {other}"))),
    }
}

async fn rating_handler(
    State(svc): State<Arc<AnnotationService>>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Value>, AnnotateError> {
    let Json(body) = body.map_err(|e| AnnotateError::Invalid(e.body_text()))?;
    let field = |name: &str| body.get(name).cloned().unwrap_or(Value::Null);
    let task = field("task_id")
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| AnnotateError::Invalid("task_id must be a string".into()))?;
    let annotator = field("annotator_id")
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| AnnotateError::BadAnnotator("missing".into()))?;
    let follows = parse_follows(&field("follows_instruction"))?;
    let how_well = field("how_well")
        .as_u64()
        .filter(|v| (1..=5).contains(v))
        .ok_or_else(|| AnnotateError::Invalid(format!("how_well must be an integer 1 to 5, got {}", field("how_well"))))?;
    let rating = svc.submit(&task, &annotator, follows, how_well as u8)?;
    Ok(Json(json!({"status": "ok", "answer_id": rating.answer_id})))
}

async fn progress_handler(State(svc): State<Arc<AnnotationService>>) -> Json<ProgressSummary> {
    Json(svc.progress())
}

/// Routes: `GET /api/tasks/next`, `POST /api/ratings`, `GET /api/progress`,
/// and the static client under `/ui/` when `ui_dir` is given.
pub fn router(service: Arc<AnnotationService>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks/next", get(next_handler))
        .route("/api/ratings", post(rating_handler))
        .route("/api/progress", get(progress_handler))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serve until the process is stopped.
pub async fn serve(
    service: Arc<AnnotationService>,
    addr: SocketAddr,
    ui_dir: Option<PathBuf>,
) -> Result<(), AnnotateError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service, ui_dir)).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotator_ids() {
        assert!(check_annotator("ann_01").is_ok());
        assert!(check_annotator("a.b@c-d").is_ok());
        assert!(check_annotator("").is_err());
        assert!(check_annotator("has space").is_err());
        assert!(check_annotator(&"x".repeat(129)).is_err());
    }

    #[test]
    fn task_ids_are_stable_and_distinct() {
        assert_eq!(task_id("a1", "x"), task_id("a1", "x"));
        assert_ne!(task_id("a1", "x"), task_id("a1", "y"));
        assert_ne!(task_id("a1", "x"), task_id("a2", "x"));
    }
}
