//! HTTP JSON API over role-play sessions, questionnaires and validation
//! reports, with a server-sent event stream per session.
//!
//! | route | purpose |
//! |---|---|
//! | `GET /roles`, `GET /scenario` | public role info and house rules |
//! | `POST /sessions` | create (or reopen) a session |
//! | `GET /sessions/{id}` | session view, `?since=seq` |
//! | `GET /sessions/{id}/turns` | turns after `?since=seq` |
//! | `GET /sessions/{id}/events` | event stream: `turn`, `phase`, `pending`, `round_failed` |
//! | `POST /sessions/{id}/start`, `/utterance`, `/retry`, `/end` | lifecycle |
//! | `GET /instruments/{id}`, `POST /questionnaires/{id}/responses` | questionnaires |
//! | `POST /participants`, `GET /participants/{id}` | enrollment |
//! | `GET /reports/validation` | latest fidelity reports |

mod error;
mod routes;
mod state;

use std::net::SocketAddr;

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;
pub use routes::{ApiSessionView, RoundReply, ScenarioView, SessionDescriptor};
pub use state::{AppState, ServiceConfig, SessionEvent, SessionHandle, SharedState};

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);
    if origins.is_empty() {
        layer.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
        layer.allow_origin(AllowOrigin::list(list))
    }
}

pub fn router(state: SharedState) -> Router {
    let cors = cors(&state.config.cors_origins);
    Router::new()
        .route("/health", get(routes::health))
        .route("/roles", get(routes::roles))
        .route("/scenario", get(routes::scenario))
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}", get(routes::get_session))
        .route("/sessions/{id}/turns", get(routes::get_turns))
        .route("/sessions/{id}/events", get(routes::events))
        .route("/sessions/{id}/start", post(routes::start_session))
        .route("/sessions/{id}/utterance", post(routes::utterance))
        .route("/sessions/{id}/retry", post(routes::retry))
        .route("/sessions/{id}/end", post(routes::end_session))
        .route("/instruments/{id}", get(routes::get_instrument))
        .route("/questionnaires/{id}/responses", post(routes::post_questionnaire))
        .route("/participants", post(routes::assign))
        .route("/participants/{id}", get(routes::participant))
        .route("/reports/validation", get(routes::validation_reports))
        .layer(axum::middleware::from_fn_with_state(state.clone(), routes::require_token))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: SharedState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
