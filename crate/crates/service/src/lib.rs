//! REST facade over editing sessions, the object bank, and rendering.
//!
//! Routes:
//!
//! | method | path | purpose |
//! |---|---|---|
//! | POST | `/sessions` | create a session from `{model, seed \| codes, segmentation?}` |
//! | GET | `/sessions/{id}` | session resource (status, log, links) |
//! | POST | `/sessions/{id}/edits` | apply one edit op; 409 while another edit runs |
//! | GET | `/sessions/{id}/render[?layer=]` | PNG of the output, or a channel-mean heatmap of one layer |
//! | GET | `/sessions/{id}/layout` | parsed room layout |
//! | GET | `/objects` | bank catalog |
//! | GET | `/objects/{id}/thumbnail` | object mask PNG |
//! | GET | `/healthz` | liveness |

mod error;
mod state;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use logan_core::composer::{BaseSpec, Scene};
use logan_core::layout::Palette;
use logan_core::mask::BBox;
use logan_core::{EditOp, EditScript, SegmentationMap, Session};
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ErrorCode};
pub use state::{AppState, ModelRegistry, ServiceConfig, SessionSlot};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edits", post(post_edit))
        .route("/sessions/{id}/render", get(get_render))
        .route("/sessions/{id}/layout", get(get_layout))
        .route("/objects", get(list_objects))
        .route("/objects/{id}/thumbnail", get(thumbnail))
        .fallback(not_found)
        .with_state(state)
}

/// Binds `config.bind` and serves until the process stops.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::from_config(&config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub model: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub codes: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub segmentation: Option<SegmentationUpload>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationUpload {
    /// Indexed or grayscale 8-bit PNG, base64 encoded.
    pub png_base64: String,
    pub palette: Palette,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Links {
    pub render: String,
    pub layout: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResource {
    pub id: String,
    /// `ready`, `rendering` while an edit runs, or `error` after a failed edit.
    pub status: String,
    pub model: String,
    pub log: Vec<EditOp>,
    pub etag: String,
    pub links: Links,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub id: String,
    pub category: String,
    pub priority: u32,
    pub bbox: BBox,
    pub layers: Vec<usize>,
    pub thumbnail: String,
}

fn resource(slot: &SessionSlot, status: &str) -> SessionResource {
    let session = slot.session.read().expect("session poisoned");
    SessionResource {
        id: slot.id.clone(),
        status: status.to_string(),
        model: slot.model.clone(),
        log: session.log().to_vec(),
        etag: session.log_digest(),
        links: Links {
            render: format!("/sessions/{}/render", slot.id),
            layout: format!("/sessions/{}/layout", slot.id),
        },
    }
}

fn status_of(slot: &SessionSlot) -> &'static str {
    if slot.writer.try_lock().is_err() {
        "rendering"
    } else if slot.last_error.lock().expect("poisoned").is_some() {
        "error"
    } else {
        "ready"
    }
}

/// Bodies that are not JSON are malformed (400); well-formed JSON with the
/// wrong shape is `schema` (400 or 422 depending on the route).
fn parse_body<T: serde::de::DeserializeOwned>(
    bytes: &[u8],
    schema: fn(String) -> ApiError,
) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => schema(e.to_string()),
        _ => ApiError::malformed(e.to_string()),
    })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, "no such route")
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body, ApiError::malformed)?;
    let model = state.models.resolve(&req.model)?;
    if req.seed.is_some() == req.codes.is_some() {
        return Err(ApiError::malformed("give exactly one of `seed` or `codes`"));
    }
    let scene = match req.segmentation {
        Some(up) => {
            let png = base64::engine::general_purpose::STANDARD
                .decode(up.png_base64.as_bytes())
                .map_err(|e| ApiError::malformed(format!("segmentation.png_base64: {e}")))?;
            let seg = SegmentationMap::from_png(&png, up.palette)
                .map_err(|e| ApiError::malformed(format!("segmentation: {e}")))?;
            Some(Arc::new(Scene::new(seg)))
        }
        None => None,
    };
    let script = EditScript::new(BaseSpec {
        seed: req.seed,
        codes: req.codes,
        segmentation: None,
    });
    let bank = state.bank.clone();
    let session = blocking(move || {
        Session::new(model, bank, scene, &script).map_err(|e| match e {
            e if e.is_parse_error() => ApiError::malformed(e.to_string()),
            e => ApiError::internal(e.to_string()),
        })
    })
    .await?;
    let slot = state.insert_session(req.model, session)?;
    log::info!("created session {} ({})", slot.id, slot.model);
    let body = resource(&slot, "ready");
    let mut resp = (StatusCode::CREATED, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("/sessions/{}", slot.id)) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    Ok(resp)
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionResource>> {
    let slot = state.session(&id)?;
    let status = status_of(&slot);
    Ok(Json(resource(&slot, status)))
}

fn invalid_op(message: String) -> ApiError {
    ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::InvalidOp,
        message,
    )
}

async fn post_edit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionResource>> {
    let slot = state.session(&id)?;
    let Ok(_writer) = slot.writer.try_lock() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            ErrorCode::EditInFlight,
            format!("session `{id}` already has an edit in flight"),
        ));
    };
    let op: EditOp = parse_body(&body, invalid_op)?;
    let worker = slot.clone();
    let outcome = blocking(move || {
        let mut next = worker.session.read().expect("session poisoned").clone();
        next.apply_edit(op).map_err(error::from_edit_error)?;
        *worker.session.write().expect("session poisoned") = next;
        Ok(())
    })
    .await;
    let mut last_error = slot.last_error.lock().expect("poisoned");
    match outcome {
        Ok(()) => *last_error = None,
        Err(e) => {
            if e.code == ErrorCode::ExecutionFailed {
                *last_error = Some(e.message.clone());
            }
            return Err(e);
        }
    }
    drop(last_error);
    log::info!("session {id}: edit applied");
    Ok(Json(resource(&slot, "ready")))
}

fn bad_layer(message: String) -> ApiError {
    ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::BadLayer,
        message,
    )
}

async fn get_render(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let slot = state.session(&id)?;
    let layer = match query.get("layer") {
        Some(raw) => Some(
            raw.parse::<usize>()
                .map_err(|_| bad_layer(format!("layer `{raw}` is not a non-negative integer")))?,
        ),
        None => None,
    };
    let (etag, png) = blocking(move || {
        let session = slot.session.read().expect("session poisoned");
        let etag = format!("\"{}\"", session.log_digest());
        let png = match layer {
            None => session.image().to_png(),
            Some(l) => {
                let top = session.model().layer_count() + 1;
                if !(1..=top).contains(&l) {
                    return Err(bad_layer(format!("layer {l} outside 1..={top}")));
                }
                let f = session.features(l).map_err(|e| bad_layer(e.to_string()))?;
                logan_core::image::feature_heatmap_png(f)
            }
        }
        .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((etag, png))
    })
    .await?;
    let etag_value = HeaderValue::from_str(&etag).map_err(|e| ApiError::internal(e.to_string()))?;
    if headers.get(header::IF_NONE_MATCH) == Some(&etag_value) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value)]).into_response());
    }
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::ETAG, etag_value),
        ],
        png,
    )
        .into_response())
}

async fn get_layout(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = state.session(&id)?;
    let session = slot.session.read().expect("session poisoned");
    match (session.scene(), session.layout()) {
        (_, Some(layout)) => Ok(Json(layout).into_response()),
        (None, None) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::NoSegmentation,
            "session was created without a segmentation map",
        )),
        (Some(_), None) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::LayoutUnavailable,
            "segmentation lacks ceiling or border floor pixels",
        )),
    }
}

async fn list_objects(State(state): State<Arc<AppState>>) -> Json<Vec<ObjectSummary>> {
    Json(
        state
            .bank
            .assets()
            .map(|a| ObjectSummary {
                id: a.id.clone(),
                category: a.category.clone(),
                priority: a.priority,
                bbox: a.bbox,
                layers: a.layers.keys().copied().collect(),
                thumbnail: format!("/objects/{}/thumbnail", a.id),
            })
            .collect(),
    )
}

async fn thumbnail(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let asset = state.bank.get(&id).map_err(|_| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            ErrorCode::UnknownObject,
            format!("unknown object `{id}`"),
        )
    })?;
    let png = asset
        .mask
        .to_png()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
