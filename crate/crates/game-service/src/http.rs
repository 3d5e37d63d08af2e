use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::export::{game_log_csv, questionnaire_csv};
use crate::game::{Game, GameError};
use crate::types::{ActionRequest, CreateSession, QuestionnaireRequest};

impl GameError {
    pub fn status(&self) -> StatusCode {
        match self {
            GameError::NotFound(_) => StatusCode::NOT_FOUND,
            GameError::Gone(_) => StatusCode::GONE,
            GameError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            GameError::Conflict(_) => StatusCode::CONFLICT,
            GameError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for GameError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

impl From<JsonRejection> for GameError {
    fn from(r: JsonRejection) -> Self {
        GameError::Invalid(r.body_text())
    }
}

type Shared = State<Arc<Game>>;

/// Runs session work off the async threads; explanation generation is CPU
/// bound.
async fn blocking<T, F>(game: Arc<Game>, f: F) -> Result<T, GameError>
where
    T: Send + 'static,
    F: FnOnce(&Game) -> Result<T, GameError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&game))
        .await
        .map_err(|e| GameError::Internal(format!("worker failed: {e}")))?
}

async fn healthz(State(game): Shared) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "sessions": game.session_count(),
        "grid_side": game.config().grid_side,
        "seed": game.config().seed,
        "models": if game.models().trained { "trained" } else { "random-init" },
    }))
}

async fn create_session(
    State(game): Shared,
    body: Option<Json<CreateSession>>,
) -> Result<impl IntoResponse, GameError> {
    let first = body.and_then(|b| b.0.first);
    let view = blocking(game, move |g| g.create_session(first)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn session(State(game): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, GameError> {
    Ok(Json(game.session_view(&id)?))
}

async fn get_step(State(game): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, GameError> {
    Ok(Json(blocking(game, move |g| g.get_step(&id)).await?))
}

async fn post_action(
    State(game): Shared,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> Result<impl IntoResponse, GameError> {
    let Json(req) = body?;
    Ok(Json(blocking(game, move |g| g.post_action(&id, &req)).await?))
}

async fn post_questionnaire(
    State(game): Shared,
    Path(id): Path<String>,
    body: Result<Json<QuestionnaireRequest>, JsonRejection>,
) -> Result<impl IntoResponse, GameError> {
    let Json(req) = body?;
    Ok(Json(blocking(game, move |g| g.post_questionnaire(&id, req)).await?))
}

fn csv_response(body: Result<String, csv::Error>) -> Result<Response, GameError> {
    let body = body.map_err(|e| GameError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

async fn export_game_log(State(game): Shared) -> Result<Response, GameError> {
    csv_response(game_log_csv(&game.game_log()))
}

async fn export_questionnaires(State(game): Shared) -> Result<Response, GameError> {
    csv_response(questionnaire_csv(&game.questionnaire_rows()))
}

pub fn router(game: Arc<Game>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/step", get(get_step))
        .route("/sessions/{id}/action", post(post_action))
        .route("/sessions/{id}/questionnaire", post(post_questionnaire))
        .route("/export/game_log.csv", get(export_game_log))
        .route("/export/questionnaire_response.csv", get(export_questionnaires))
        .with_state(game)
}
