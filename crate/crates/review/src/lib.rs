//! HTTP curation service: serves radiographs and predictions to a review
//! client, records corrections as append-only revisions and exports the
//! curated pool for the next training round.
//!
//! Routes (all JSON unless noted):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/registry` | class list with groups |
//! | GET | `/api/images?page=&per_page=` | ids with review status |
//! | GET | `/api/images/{id}/render?frame=original\|model` | 8-bit PNG |
//! | GET | `/api/images/{id}/predictions` | prediction document |
//! | GET | `/api/images/{id}/review` | current review state |
//! | POST | `/api/images/{id}/corrections` | `{base_revision, reviewer?, corrections: [...]}` |
//! | POST | `/api/images/{id}/finalize` | `{base_revision, reviewer?}` |
//! | POST | `/api/export/training-pool` | writes the pool, returns its manifest |
//!
//! Errors: 404 unknown image, 422 with per-field reasons or the list of
//! unresolved classes, 409 when `base_revision` is stale, 401 when a token
//! is configured and the `x-api-token` header does not match.

mod api;
pub mod config;
pub mod error;
pub mod export;
pub mod persist;
pub mod records;
pub mod wire;

pub use api::{router, AppState};
pub use config::ServiceConfig;
pub use error::{FieldError, ServiceError};

/// Binds the configured address and serves until the process ends.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.bind, config.port);
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {addr}: {e}")))?;
    log::info!("review service listening on {addr}");
    axum::serve(listener, router(state)).await.map_err(|e| ServiceError::Storage(e.to_string()))
}
