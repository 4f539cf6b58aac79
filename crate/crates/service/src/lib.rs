//! HTTP service for the submit, check, question and feedback loop.
//!
//! Endpoints:
//!
//! - `GET  /api/exercises`
//! - `POST /api/exercises/{exerciseId}/submissions` with `{learnerId, code}`
//! - `POST /api/submissions/{submissionId}/answers` with `{questionId, payload}`
//! - `GET  /api/learners/{learnerId}/history`

pub mod exercise;
pub mod store;
pub mod submission;

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use qlc_core::grading::{LearnerHistory, MasterySummary};
use qlc_core::TemplateId;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub use exercise::{load_exercises, CheckSpec, Exercise, ExerciseSpec, ExerciseSummary, LoadError};
pub use store::{Store, StoreError};
pub use submission::{
    evaluate, AnswerInput, AnswerResponse, AnswerVerdict, CheckResult, QuestionStatus, Submission,
    SubmissionState, SubmissionView, MAX_CODE_BYTES,
};

pub const EXERCISES_DIR_VAR: &str = "QLC_EXERCISES_DIR";
pub const DATA_DIR_VAR: &str = "QLC_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub exercises_dir: PathBuf,
    pub data_dir: PathBuf,
}

impl ServiceConfig {
    /// `./exercises` and `./data`, unless the environment says otherwise.
    pub fn from_env() -> Self {
        let var = |name: &str, default: &str| {
            std::env::var_os(name).map_or_else(|| PathBuf::from(default), PathBuf::from)
        };
        Self {
            exercises_dir: var(EXERCISES_DIR_VAR, "exercises"),
            data_dir: var(DATA_DIR_VAR, "data"),
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Exercises(#[from] LoadError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct Inner {
    history: LearnerHistory,
    submissions: BTreeMap<String, Submission>,
}

/// Shared service state.
pub struct App {
    exercises: Vec<Exercise>,
    store: Store,
    inner: Mutex<Inner>,
}

impl App {
    pub fn load(config: &ServiceConfig) -> Result<Arc<Self>, StartupError> {
        let exercises = load_exercises(&config.exercises_dir)?;
        let (store, loaded) = Store::open(&config.data_dir)?;
        Ok(Arc::new(Self {
            exercises,
            store,
            inner: Mutex::new(Inner {
                history: loaded.history,
                submissions: loaded.submissions,
            }),
        }))
    }

    pub fn exercises(&self) -> &[Exercise] {
        &self.exercises
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn is_mastered(&self, learner_id: &str, template: TemplateId, threshold: u32) -> bool {
        self.lock().history.is_mastered(learner_id, template, threshold)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SubmitRequest {
    pub learner_id: String,
    pub code: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AnswerRequest {
    pub question_id: String,
    pub payload: AnswerInput,
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/api/exercises", get(list_exercises))
        .route("/api/exercises/{exercise_id}/submissions", post(submit))
        .route("/api/submissions/{submission_id}/answers", post(answer))
        .route("/api/learners/{learner_id}/history", get(learner_history))
        .with_state(app)
}

async fn list_exercises(State(app): State<Arc<App>>) -> Json<Vec<ExerciseSummary>> {
    Json(app.exercises.iter().map(Exercise::summary).collect())
}

fn seed_of(id: Uuid) -> u64 {
    let (hi, lo) = id.as_u64_pair();
    hi ^ lo
}

async fn submit(
    State(app): State<Arc<App>>,
    Path(exercise_id): Path<String>,
    Json(req): Json<SubmitRequest>,
) -> Result<(StatusCode, Json<SubmissionView>), ApiError> {
    let exercise = app
        .exercises
        .iter()
        .find(|e| e.spec.exercise_id == exercise_id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no exercise {exercise_id}")))?;
    if req.code.len() > MAX_CODE_BYTES {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("code is limited to {MAX_CODE_BYTES} bytes"),
        ));
    }
    if req.learner_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "learnerId must not be empty"));
    }

    let id = Uuid::new_v4();
    let received_at = Utc::now();
    let history = app.lock().history.clone();
    let (learner_id, code) = (req.learner_id, req.code);
    let evaluation = {
        let (learner_id, code) = (learner_id.clone(), code.clone());
        tokio::task::spawn_blocking(move || {
            evaluate(&exercise, &code, &history, &learner_id, seed_of(id))
        })
        .await
        .map_err(ApiError::internal)?
    };

    let submission = Submission {
        submission_id: id.to_string(),
        exercise_id,
        learner_id,
        code,
        received_at,
        check_results: evaluation.check_results,
        diagnostics: evaluation.diagnostics,
        questions: evaluation
            .questions
            .into_iter()
            .map(|question| submission::QuestionRecord {
                question,
                status: QuestionStatus::Pending,
                attempts: Vec::new(),
            })
            .collect(),
        state: evaluation.state,
    };
    let view = submission.view();
    let mut inner = app.lock();
    app.store.save_submission(&submission).map_err(ApiError::internal)?;
    inner.submissions.insert(submission.submission_id.clone(), submission);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn answer(
    State(app): State<Arc<App>>,
    Path(submission_id): Path<String>,
    Json(req): Json<AnswerRequest>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let mut inner = app.lock();
    let mut updated = inner
        .submissions
        .get(&submission_id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no submission {submission_id}")))?;
    let now = Utc::now();
    let outcome = updated
        .answer(&req.question_id, req.payload, now)
        .map_err(|e| {
            let status = match e {
                submission::AnswerError::NotFound(_) => StatusCode::NOT_FOUND,
                submission::AnswerError::Conflict(_) => StatusCode::CONFLICT,
                submission::AnswerError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            };
            ApiError::new(status, e.to_string())
        })?;

    app.store.save_submission(&updated).map_err(ApiError::internal)?;
    if let Some((template, verdict)) = outcome.record {
        let mut history = inner.history.clone();
        let event = history
            .record(&updated.learner_id, template, verdict, now)
            .map_err(ApiError::internal)?
            .clone();
        app.store.append_history(&event).map_err(ApiError::internal)?;
        inner.history = history;
    }
    inner.submissions.insert(submission_id, updated);
    Ok(Json(outcome.response))
}

async fn learner_history(
    State(app): State<Arc<App>>,
    Path(learner_id): Path<String>,
) -> Json<BTreeMap<TemplateId, MasterySummary>> {
    Json(app.lock().history.summary(&learner_id))
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Serves until `shutdown` resolves and in-flight requests finish. Every
/// write reaches disk before its response is sent, so nothing is left to
/// flush afterwards.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<App>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
}
