//! JSON-over-HTTP access to labeling sessions, record search, membership
//! views, audit tags, estimates and summary statistics.
//!
//! State lives in a directory of session journals. Every request that
//! changes a session appends exactly one journal event.

pub mod error;
pub mod routes;
pub mod state;

use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::header;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;

pub use error::{ApiError, ApiResult};
pub use state::{AppState, Clock, ServiceConfig};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV: &str = "ERVAL_TOKEN";

fn token_matches(expected: &str, presented: &str) -> bool {
    let (a, b) = (expected.as_bytes(), presented.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if !presented.is_some_and(|p| token_matches(expected, p.trim())) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    use routes::*;
    let api = Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/tasks", get(list_tasks))
        .route("/sessions/{id}/tasks/next", get(next_task))
        .route("/sessions/{id}/qc", get(session_qc))
        .route("/sessions/{id}/benchmark", get(session_benchmark))
        .route("/sessions/{id}/audit", get(session_audit))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/lease", post(lease_task))
        .route("/tasks/{id}/release", post(release_task))
        .route("/tasks/{id}/edits", post(edit_task))
        .route("/tasks/{id}/finalize", post(finalize_task))
        .route("/search", get(search))
        .route("/clusters/{id}/membership-matrix", get(membership_matrix))
        .route("/clusters/{id}/tags", post(tag_cluster))
        .route("/estimates", get(estimates))
        .route("/summary-stats", get(summary_stats))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(api)
        .with_state(state)
}

/// Serves on a bound listener until interrupted.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
