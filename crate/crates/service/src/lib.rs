//! Network side of the benchmark: the `/predict` model server, the remote
//! evaluation orchestrator and the submission registry with its HTTP API.

pub mod orchestrate;
pub mod registry;
pub mod serve;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde_json::json;

/// `{"error": {"path": ..., "message": ...}}` with the given status.
pub(crate) fn error_response(status: StatusCode, path: Option<&str>, message: &str) -> Response {
    let body = match path {
        Some(p) => json!({"error": {"path": p, "message": message}}),
        None => json!({"error": {"message": message}}),
    };
    (status, axum::Json(body)).into_response()
}
