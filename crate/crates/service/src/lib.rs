//! HTTP service over the extraction, editing and generation pipeline.
//!
//! All routes live under `/v1`; rasters travel as PNG and everything else as
//! JSON.

pub mod config;
pub mod session;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use acgan_core::conditioning::{
    extract_conditions, extract_light_mask_with, extract_shadow_mask_with, postprocess_edges_with, ConditionSet,
    EdgeProbability, ExtractionConfig, GradientEdges, HighPassLight, Palette, Rgb,
};
use acgan_core::editing::{generate, EditScript};
use acgan_core::imaging::{BinaryMask, RangeTag, Raster, SegMask};
use acgan_core::net::{load_bundle, NetBundle};
use acgan_core::Error;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::ServiceConfig;
pub use session::{replay, Session, SessionStore};

pub const ARTIFACTS: [&str; 6] = ["edge", "palette", "color_map", "light", "shadow", "regions"];
const SEG_ARTIFACTS: [&str; 3] = ["palette", "color_map", "regions"];

/// A loaded generator and the id of the checkpoint it came from.
pub struct Model {
    pub bundle: NetBundle,
    pub checkpoint_id: String,
}

pub struct AppState {
    pub store: SessionStore,
    pub model: Option<Arc<Model>>,
    pub extraction: ExtractionConfig,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(store: SessionStore, model: Option<Model>, extraction: ExtractionConfig) -> Self {
        AppState { store, model: model.map(Arc::new), extraction, counter: AtomicU64::new(0) }
    }

    pub fn from_config(cfg: &ServiceConfig) -> acgan_core::Result<Self> {
        let model = match &cfg.checkpoint {
            Some(p) => {
                let (bundle, checkpoint_id) = load_bundle(p)?;
                log::info!("loaded checkpoint {checkpoint_id} from {}", p.display());
                Some(Model { bundle, checkpoint_id })
            }
            None => None,
        };
        let store = SessionStore::new(cfg.ttl(), cfg.session_dir.clone())?;
        Ok(AppState::new(store, model, cfg.extraction.clone()))
    }

    fn new_session_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let mut h = Sha256::new();
        h.update(uuid::Uuid::new_v4().as_bytes());
        h.update(n.to_le_bytes());
        hex::encode(&h.finalize()[..12])
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("no session '{id}'"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/extract", post(extract))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/artifacts/{name}", get(artifact))
        .route("/v1/sessions/{id}/edit", post(edit))
        .route("/v1/sessions/{id}/undo", post(undo))
        .route("/v1/sessions/{id}/generate", post(generate_image))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

/// Hash of everything the generator reads from a condition set.
pub fn state_hash(cond: &ConditionSet) -> String {
    let mut h = Sha256::new();
    h.update(cond.edge.to_raw_bytes());
    h.update(serde_json::to_vec(&cond.palette).unwrap_or_default());
    h.update(cond.color_map.to_raw_bytes());
    for m in [&cond.light, &cond.shadow, &cond.face_mask, &cond.eye_mask] {
        h.update(m.data());
    }
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub height: usize,
    pub width: usize,
    pub no_segmentation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub palette: Option<Palette>,
    pub light_pixels: usize,
    pub shadow_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub face_pixels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eye_pixels: Option<usize>,
    pub undo_depth: usize,
    pub state_hash: String,
    pub checkpoint_id: Option<String>,
    pub artifacts: BTreeMap<String, String>,
}

fn summary(s: &Session, model: Option<&Arc<Model>>) -> SessionSummary {
    let c = &s.current;
    let (height, width) = c.dims();
    let seg = !s.no_segmentation;
    let artifacts = available_artifacts(s)
        .map(|a| (a.to_string(), format!("/v1/sessions/{}/artifacts/{a}.png", s.id)))
        .collect();
    SessionSummary {
        session_id: s.id.clone(),
        height,
        width,
        no_segmentation: s.no_segmentation,
        palette: seg.then(|| c.palette.clone()),
        light_pixels: c.light.count(),
        shadow_pixels: c.shadow.count(),
        face_pixels: seg.then(|| c.face_mask.count()),
        eye_pixels: seg.then(|| c.eye_mask.count()),
        undo_depth: s.history.len(),
        state_hash: state_hash(c),
        checkpoint_id: model.map(|m| m.checkpoint_id.clone()),
        artifacts,
    }
}

fn available_artifacts(s: &Session) -> impl Iterator<Item = &'static str> + '_ {
    ARTIFACTS.into_iter().filter(move |a| !s.no_segmentation || !SEG_ARTIFACTS.contains(a))
}

/// Edge, light and shadow only; seg-derived fields are left empty.
pub fn extract_without_segmentation(image: &Raster, cfg: &ExtractionConfig) -> acgan_core::Result<ConditionSet> {
    image.ensure_channels(3, "image")?;
    let image = image.to_unit();
    let (h, w) = image.dims();
    let prob = GradientEdges::default().probability(&image)?;
    let estimator = HighPassLight::from_config(cfg);
    let set = ConditionSet {
        edge: postprocess_edges_with(&prob, cfg)?.quantize_u16(),
        palette: Palette::solid([Rgb([0, 0, 0]); 5]),
        color_map: Raster::filled(h, w, 3, RangeTag::Unit, 0.0)?,
        light: extract_light_mask_with(&image, &estimator, cfg)?,
        shadow: extract_shadow_mask_with(&image, &estimator, cfg)?,
        face_mask: BinaryMask::zeros(h, w),
        eye_mask: BinaryMask::zeros(h, w),
    };
    set.validate()?;
    Ok(set)
}

fn regions_raster(c: &ConditionSet) -> Raster {
    let (h, w) = c.dims();
    Raster::from_fn(h, w, 3, RangeTag::Unit, |ch, y, x| match ch {
        0 => c.face_mask.get(y, x) as u8 as f32,
        1 => c.eye_mask.get(y, x) as u8 as f32,
        _ => 0.0,
    })
}

pub fn render_artifact(c: &ConditionSet, name: &str) -> acgan_core::Result<Option<Vec<u8>>> {
    let raster = match name {
        "edge" => return c.edge.encode_png16().map(Some),
        "palette" => c.palette_raster()?,
        "color_map" => c.color_map.clone(),
        "light" => c.light.to_raster(),
        "shadow" => c.shadow.to_raster(),
        "regions" => regions_raster(c),
        _ => return Ok(None),
    };
    raster.encode_png().map(Some)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "api": "v1",
        "checkpoint_id": state.model.as_ref().map(|m| m.checkpoint_id.clone()),
        "sessions": state.store.len(),
    }))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    ApiError::new(e.status(), e.body_text())
}

async fn extract(State(state): State<Arc<AppState>>, mut form: Multipart) -> ApiResult<Response> {
    let mut image = None;
    let mut seg = None;
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(multipart_error)?;
        match name.as_str() {
            "image" => image = Some(data),
            "seg" => seg = Some(data),
            other => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unexpected field '{other}'"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing 'image' field"))?;
    let bad = |e: Error| ApiError::new(StatusCode::BAD_REQUEST, e.to_string());
    let image = Raster::decode_png(&image).map_err(bad)?;
    let seg = seg.map(|b| SegMask::decode_png(&b)).transpose().map_err(bad)?;
    let cfg = state.extraction.clone();
    let no_segmentation = seg.is_none();
    let cond = tokio::task::spawn_blocking(move || match &seg {
        Some(seg) => extract_conditions(&image, seg, &GradientEdges::default(), &cfg),
        None => extract_without_segmentation(&image, &cfg),
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(bad)?;
    let session = Session::new(state.new_session_id(), cond, no_segmentation);
    let body = summary(&session, state.model.as_ref());
    state.store.insert(session).map_err(ApiError::internal)?;
    Ok((StatusCode::OK, Json(body)).into_response())
}

fn lookup(state: &AppState, id: &str) -> ApiResult<session::SessionHandle> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let handle = lookup(&state, &id)?;
    let s = handle.lock().await;
    Ok(Json(summary(&s, state.model.as_ref())))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(&id))
    }
}

fn png_response(bytes: Vec<u8>, mut headers: HeaderMap) -> Response {
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    (StatusCode::OK, headers, bytes).into_response()
}

async fn artifact(
    State(state): State<Arc<AppState>>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<Response> {
    let handle = lookup(&state, &id)?;
    let s = handle.lock().await;
    let stem = name.strip_suffix(".png").unwrap_or(&name);
    let missing = || ApiError::new(StatusCode::NOT_FOUND, format!("no artifact '{name}'"));
    if !available_artifacts(&s).any(|a| a == stem) {
        return Err(missing());
    }
    let bytes = render_artifact(&s.current, stem).map_err(ApiError::internal)?.ok_or_else(missing)?;
    Ok(png_response(bytes, HeaderMap::new()))
}

async fn edit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionSummary>> {
    let handle = lookup(&state, &id)?;
    let unprocessable = |e: Error| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let script = EditScript::from_json(text).map_err(unprocessable)?;
    let mut s = handle.lock().await;
    s.edit(script).map_err(unprocessable)?;
    if let Err(e) = state.store.persist(&s) {
        s.undo().map_err(ApiError::internal)?;
        return Err(ApiError::internal(e));
    }
    Ok(Json(summary(&s, state.model.as_ref())))
}

async fn undo(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionSummary>> {
    let handle = lookup(&state, &id)?;
    let mut s = handle.lock().await;
    if !s.undo().map_err(ApiError::internal)? {
        return Err(ApiError::new(StatusCode::CONFLICT, "nothing to undo"));
    }
    state.store.persist(&s).map_err(ApiError::internal)?;
    Ok(Json(summary(&s, state.model.as_ref())))
}

async fn generate_image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = lookup(&state, &id)?;
    let model = state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no checkpoint loaded"))?;
    let cond = handle.lock().await.current.clone();
    let hash = state_hash(&cond);
    let start = Instant::now();
    let m = model.clone();
    let png = tokio::task::spawn_blocking(move || generate(&m.bundle, &cond).and_then(|r| r.encode_png()))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let mut headers = HeaderMap::new();
    let value = |s: String| HeaderValue::from_str(&s).map_err(ApiError::internal);
    headers.insert("x-checkpoint-id", value(model.checkpoint_id.clone())?);
    headers.insert("x-latency-ms", value(start.elapsed().as_millis().to_string())?);
    headers.insert("x-state-hash", value(hash)?);
    Ok(png_response(png, headers))
}

/// Binds and serves until ctrl-c, sweeping expired sessions in the background.
pub async fn serve(cfg: ServiceConfig) -> acgan_core::Result<()> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let app = router(state.clone(), cfg.max_body_bytes);
    let listener = tokio::net::TcpListener::bind(cfg.bind).await.map_err(|e| Error::io("bind", e))?;
    log::info!("listening on {}", cfg.bind);
    let sweeper = state.clone();
    let period = cfg.ttl().max(std::time::Duration::from_secs(1)) / 2;
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.store.len();
        }
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("serve", e))
}

/// Runs [`serve`] on a fresh multi-threaded runtime.
pub fn run_blocking(cfg: ServiceConfig) -> acgan_core::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("runtime", e))?;
    rt.block_on(serve(cfg))
}
