use std::collections::BTreeMap;
use std::io::Cursor;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use pelvimark::ingest::{normalize_image, render_8bit};
use pelvimark::labelgen::LabelOptions;
use pelvimark::model::{ClassRegistry, PixelSpacing};
use pelvimark::pipeline::PredictionSet;
use pelvimark::store::{IndexEntry, Store};

use crate::config::ServiceConfig;
use crate::error::{FieldError, ServiceError};
use crate::export::export_pool;
use crate::persist::ReviewStore;
use crate::records::{apply_corrections, Action, ImageBounds, ReviewRecord, ReviewStatus, StoredRevision, REVISION_SCHEMA_VERSION};
use crate::wire::{CorrectionsRequest, FinalizeRequest};

type ApiResult<T> = Result<T, ServiceError>;

struct Inner {
    config: ServiceConfig,
    registry: ClassRegistry,
    store: Store,
    index: BTreeMap<String, IndexEntry>,
    reviews: ReviewStore,
    records: RwLock<BTreeMap<String, ReviewRecord>>,
    /// Serializes writes per image.
    locks: BTreeMap<String, Mutex<()>>,
    /// Writers share it; export takes it exclusively for a consistent pool.
    snapshot: tokio::sync::RwLock<()>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the dataset store and rebuilds review state from the revision
    /// files on disk.
    pub fn open(config: ServiceConfig) -> ApiResult<Self> {
        config.validate()?;
        let store = Store::open(&config.data_root)?;
        let registry = pelvimark::model::load_class_registry(config.registry_path())?;
        let index: BTreeMap<String, IndexEntry> =
            store.index()?.images.into_iter().map(|e| (e.id.clone(), e)).collect();
        let reviews = ReviewStore::new(config.review_path());
        let mut records = BTreeMap::new();
        for (id, rev) in reviews.scan()? {
            if !index.contains_key(&id) {
                log::warn!("review history for {id} has no image in the store; ignored");
                continue;
            }
            records.insert(id, ReviewRecord::from_stored(&rev, &registry)?);
        }
        let locks = index.keys().map(|k| (k.clone(), Mutex::new(()))).collect();
        Ok(Self(Arc::new(Inner {
            config,
            registry,
            store,
            index,
            reviews,
            records: RwLock::new(records),
            locks,
            snapshot: tokio::sync::RwLock::new(()),
        })))
    }

    pub fn reviews(&self) -> &ReviewStore {
        &self.0.reviews
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.0.registry
    }

    pub fn record(&self, id: &str) -> Option<ReviewRecord> {
        if !self.0.index.contains_key(id) {
            return None;
        }
        let records = self.0.records.read().unwrap_or_else(|p| p.into_inner());
        Some(records.get(id).cloned().unwrap_or_else(|| ReviewRecord::pending(id)))
    }

    fn entry(&self, id: &str) -> ApiResult<&IndexEntry> {
        self.0.index.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn prediction(&self, id: &str) -> ApiResult<Option<PredictionSet>> {
        let p = self.0.config.predictions_path().join(format!("{id}.json"));
        if !p.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| ServiceError::Storage(format!("{}: {e}", p.display())))?;
        Ok(Some(PredictionSet::from_json_str(&text, &self.0.registry)?))
    }

    fn commit(&self, rev: StoredRevision) -> ApiResult<ReviewRecord> {
        self.0.reviews.append(&rev)?;
        let rec = ReviewRecord::from_stored(&rev, &self.0.registry)?;
        self.0
            .records
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(rev.image_id.clone(), rec.clone());
        Ok(rec)
    }

    fn label_options(&self) -> LabelOptions {
        let c = &self.0.config;
        LabelOptions {
            landmark_radius_mm: c.landmark_radius_mm,
            stroke_mm: c.stroke_mm,
            input_side: c.input_side,
            fallback_spacing: c.fallback_spacing_mm.and_then(|s| PixelSpacing::isotropic(s).ok()),
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

async fn check_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.0.config.token {
        let ok = req.headers().get("x-api-token").and_then(|v| v.to_str().ok()) == Some(token.as_str());
        if !ok {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// All routes under `/api`.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/registry", get(registry))
        .route("/api/images", get(list_images))
        .route("/api/images/{id}/render", get(render))
        .route("/api/images/{id}/predictions", get(predictions))
        .route("/api/images/{id}/review", get(review))
        .route("/api/images/{id}/corrections", post(corrections))
        .route("/api/images/{id}/finalize", post(finalize))
        .route("/api/export/training-pool", post(export))
        .layer(middleware::from_fn_with_state(state.clone(), check_token))
        .with_state(state)
}

async fn registry(State(state): State<AppState>) -> Json<Value> {
    let classes: Vec<Value> = state
        .0
        .registry
        .classes()
        .iter()
        .map(|c| json!({ "code": c.code, "kind": c.kind, "side": c.side.as_str(), "group": c.group(), "name": c.name }))
        .collect();
    Json(json!({ "classes": classes }))
}

#[derive(Deserialize)]
struct PageQuery {
    page: Option<usize>,
    per_page: Option<usize>,
}

async fn list_images(State(state): State<AppState>, Query(q): Query<PageQuery>) -> ApiResult<Json<Value>> {
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(state.0.config.page_size);
    let mut fields = Vec::new();
    if page == 0 {
        fields.push(FieldError::new("page", "pages start at 1"));
    }
    if !(1..=1000).contains(&per_page) {
        fields.push(FieldError::new("per_page", "must lie in 1..=1000"));
    }
    if !fields.is_empty() {
        return Err(ServiceError::Invalid(fields));
    }
    let images: Vec<Value> = state
        .0
        .index
        .keys()
        .skip((page - 1) * per_page)
        .take(per_page)
        .map(|id| {
            let r = state.record(id).expect("indexed image");
            json!({ "image_id": id, "status": r.status, "revision": r.revision })
        })
        .collect();
    Ok(Json(json!({ "page": page, "per_page": per_page, "total": state.0.index.len(), "images": images })))
}

#[derive(Deserialize)]
struct RenderQuery {
    frame: Option<String>,
}

async fn render(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<RenderQuery>) -> ApiResult<Response> {
    state.entry(&id)?;
    let model = match q.frame.as_deref().unwrap_or("original") {
        "original" => false,
        "model" => true,
        other => {
            return Err(ServiceError::Invalid(vec![FieldError::new("frame", format!("'{other}' is not original or model"))]))
        }
    };
    let st = state.clone();
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let rec = st.0.store.load_image(&id)?;
        let (w, h, px) = if model {
            let n = normalize_image(&rec, st.0.config.input_side)?;
            (n.width, n.height, n.intensities)
        } else {
            (rec.width, rec.height, render_8bit(&rec))
        };
        let img = image::GrayImage::from_raw(w, h, px).ok_or_else(|| ServiceError::Storage("pixel buffer size".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| ServiceError::Storage(e.to_string()))?;
        Ok(out.into_inner())
    })
    .await
    .map_err(|e| ServiceError::Storage(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response())
}

async fn predictions(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    state.entry(&id)?;
    let Some(p) = state.prediction(&id)? else {
        return Err(ServiceError::Missing(format!("no predictions for image {id}")));
    };
    let text = p.to_json_string(&state.0.registry)?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], text).into_response())
}

async fn review(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = state.record(&id).ok_or(ServiceError::NotFound(id))?;
    Ok(Json(rec.to_json(&state.0.registry)))
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(vec![FieldError::new("body", e.to_string())]))
}

fn record_response(state: &AppState, rec: &ReviewRecord) -> Json<Value> {
    Json(rec.to_json(&state.0.registry))
}

async fn corrections(State(state): State<AppState>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    let entry = state.entry(&id)?.clone();
    let req: CorrectionsRequest = parse_body(&body)?;
    let _snapshot = state.0.snapshot.read().await;
    let _guard = state.0.locks[&id].lock().await;
    let current = state.record(&id).expect("indexed image");
    let prediction = state.prediction(&id)?;
    let bounds = ImageBounds { width: entry.width, height: entry.height };
    if req.base_revision != current.revision {
        // a resend of the request that produced the current revision
        if let Ok((delta, _)) = apply_corrections(&ReviewRecord::pending(&id), &req.corrections, &state.0.registry, prediction.as_ref(), &bounds) {
            if current.is_replay(req.base_revision, Action::Corrections, &delta, &req.reviewer) {
                return Ok(record_response(&state, &current));
            }
        }
        return Err(ServiceError::Stale { submitted: req.base_revision, current: current.revision });
    }
    let (delta, resolutions) = apply_corrections(&current, &req.corrections, &state.0.registry, prediction.as_ref(), &bounds)
        .map_err(ServiceError::Invalid)?;
    let rev = StoredRevision {
        schema_version: REVISION_SCHEMA_VERSION,
        image_id: id.clone(),
        revision: current.revision + 1,
        base_revision: current.revision,
        action: Action::Corrections,
        reviewer: req.reviewer,
        timestamp: now(),
        delta,
        status: ReviewStatus::InReview,
        resolutions: resolutions.into_values().collect(),
    };
    let rec = state.commit(rev)?;
    Ok(record_response(&state, &rec))
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult<Json<Value>> {
    state.entry(&id)?;
    let req: FinalizeRequest = parse_body(&body)?;
    let _snapshot = state.0.snapshot.read().await;
    let _guard = state.0.locks[&id].lock().await;
    let current = state.record(&id).expect("indexed image");
    if req.base_revision != current.revision {
        if current.is_replay(req.base_revision, Action::Finalize, &[], &req.reviewer) {
            return Ok(record_response(&state, &current));
        }
        return Err(ServiceError::Stale { submitted: req.base_revision, current: current.revision });
    }
    let unresolved = current.unresolved(&state.0.registry);
    if !unresolved.is_empty() {
        return Err(ServiceError::Unresolved(unresolved));
    }
    let rev = StoredRevision {
        schema_version: REVISION_SCHEMA_VERSION,
        image_id: id.clone(),
        revision: current.revision + 1,
        base_revision: current.revision,
        action: Action::Finalize,
        reviewer: req.reviewer,
        timestamp: now(),
        delta: vec![],
        status: ReviewStatus::Curated,
        resolutions: current.resolutions.into_values().collect(),
    };
    let rec = state.commit(rev)?;
    Ok(record_response(&state, &rec))
}

async fn export(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let _exclusive = state.0.snapshot.write().await;
    let split = state.0.store.read_split()?;
    let records: Vec<_> = state
        .0
        .index
        .iter()
        .map(|(id, e)| {
            let s = split.as_ref().and_then(|m| m.get(id)).unwrap_or_default();
            (e.clone(), s, state.record(id).expect("indexed image"))
        })
        .collect();
    let st = state.clone();
    let manifest = tokio::task::spawn_blocking(move || {
        export_pool(&records, &st.0.registry, &st.label_options(), &st.0.config.pool_path())
    })
    .await
    .map_err(|e| ServiceError::Storage(e.to_string()))??;
    Ok(Json(serde_json::to_value(manifest).map_err(|e| ServiceError::Storage(e.to_string()))?))
}
