//! Local HTTP render service.
//!
//! Responses depend only on the request body and the data root, which is
//! loaded once and shared read-only. Renders run on the blocking pool behind
//! a semaphore; requests beyond `max_concurrent` wait for a permit.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use relit::dataset::{frame_path, inflate, write_manifest_to, FrameRecord, GridSpec};
use relit::imagecore::png::encode_png;
use relit::imagecore::Rgb;
use relit::palette::preset_palette;
use relit::relight::{Domain, RelightParams};
use relit::tonemap::{tonemap_sequence, ToneMapMode, ToneMapSpec};
use relit::Error;

use crate::data::DataRoot;

/// Largest accepted alpha or gamma. Values above 1 extrapolate.
pub const MAX_INTENSITY: f32 = 2.0;
pub const PREVIEW_LONG_EDGE: usize = 1024;
/// Frames per `/sequence` request, over all modes.
pub const MAX_SEQUENCE_FRAMES: usize = 1000;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_root: PathBuf,
    pub max_concurrent: usize,
    pub tonemap: ToneMapSpec,
    pub preview_long_edge: usize,
}

#[derive(Clone)]
pub struct AppState {
    data: Arc<DataRoot>,
    spec: Arc<ToneMapSpec>,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(data: DataRoot, spec: ToneMapSpec, max_concurrent: usize) -> Self {
        Self {
            data: Arc::new(data),
            spec: Arc::new(spec),
            permits: Arc::new(Semaphore::new(max_concurrent.max(1))),
        }
    }
}

/// Error payload: `{"error": {"code", "message", "field"?}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn field(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field),
            ..Self::new(StatusCode::BAD_REQUEST, "validation_error", message)
        }
    }

    fn unknown_pair(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_pair", format!("no pair with id {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::InvalidInput(m) => Self::new(StatusCode::BAD_REQUEST, "validation_error", m.clone()),
            Error::DegenerateExposure { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate_exposure", e.to_string())
            }
            Error::DegenerateColor { .. } | Error::NoLight => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "degenerate_pair", e.to_string())
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(f) = self.field {
            err["field"] = json!(f);
        }
        (self.status, Json(json!({ "error": err }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

fn check_intensity(field: &'static str, v: f32) -> ApiResult<()> {
    if v.is_finite() && (0.0..=MAX_INTENSITY).contains(&v) {
        Ok(())
    } else {
        Err(ApiError::field(field, format!("{field} must be in [0, {MAX_INTENSITY}], got {v}")))
    }
}

fn check_color(field: &'static str, c: Rgb) -> ApiResult<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(ApiError::field(field, format!("{field} components must be in [0, 1], got {c:?}")))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Deciding {
    pub alpha: f32,
    pub gamma: f32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelightRequest {
    pub pair_id: String,
    pub alpha: f32,
    pub gamma: f32,
    pub color: Rgb,
    #[serde(default)]
    pub tonemap_mode: Option<ToneMapMode>,
    #[serde(default)]
    pub deciding: Option<Deciding>,
    #[serde(default)]
    pub full_resolution: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridArg {
    Named(String),
    Spec(GridSpec),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceRequest {
    pub pair_id: String,
    pub grid: GridArg,
    /// Both modes when absent.
    #[serde(default)]
    pub tonemap_mode: Option<ToneMapMode>,
    #[serde(default)]
    pub full_resolution: bool,
}

#[derive(Serialize)]
struct PairSummary<'a> {
    pair_id: &'a str,
    domain: Domain,
    thumbnail: String,
}

async fn list_pairs(State(st): State<AppState>) -> Json<serde_json::Value> {
    let rows: Vec<_> = st
        .data
        .iter()
        .map(|p| PairSummary {
            pair_id: &p.meta.pair_id,
            domain: p.meta.domain,
            thumbnail: format!("/pairs/{}/thumb", p.meta.pair_id),
        })
        .collect();
    Json(json!(rows))
}

async fn pair_meta(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let p = st.data.get(&id).ok_or_else(|| ApiError::unknown_pair(&id))?;
    let (w, h) = p.full.dimensions();
    let (pw, ph) = p.preview.dimensions();
    let mut masks = Vec::new();
    if p.has_mask {
        masks.push(relit::relight::MASK_FILE);
    }
    let palette: Vec<_> = preset_palette()
        .into_iter()
        .map(|(name, rgb)| json!({ "name": name, "rgb": rgb }))
        .collect();
    Ok(Json(json!({
        "pair_id": p.meta.pair_id,
        "domain": p.meta.domain,
        "c_o": p.meta.c_o,
        "width": w,
        "height": h,
        "preview_width": pw,
        "preview_height": ph,
        "masks": masks,
        "has_depth": p.has_depth,
        "palette": palette,
        "max_intensity": MAX_INTENSITY,
    })))
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn thumb(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let p = st.data.get(&id).ok_or_else(|| ApiError::unknown_pair(&id))?;
    Ok(png_response(p.thumb_png.clone()))
}

async fn render<T: Send + 'static>(
    st: &AppState,
    job: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> ApiResult<T> {
    let _permit = st
        .permits
        .acquire()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", "service is stopping"))?;
    tokio::task::spawn_blocking(job)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

/// Validates a relight request and renders it to PNG bytes.
pub fn render_relight(data: &DataRoot, base: &ToneMapSpec, req: &RelightRequest) -> ApiResult<Vec<u8>> {
    check_intensity("alpha", req.alpha)?;
    check_intensity("gamma", req.gamma)?;
    check_color("color", req.color)?;
    let mut spec = base.with_mode(req.tonemap_mode.unwrap_or(base.mode));
    if let Some(d) = req.deciding {
        check_intensity("deciding.alpha", d.alpha)?;
        check_intensity("deciding.gamma", d.gamma)?;
        spec.deciding_alpha = d.alpha;
        spec.deciding_gamma = d.gamma;
    }
    let loaded = data.get(&req.pair_id).ok_or_else(|| ApiError::unknown_pair(&req.pair_id))?;
    let params = RelightParams::new(req.alpha, req.gamma, req.color)?;
    let seq = tonemap_sequence(loaded.pair(req.full_resolution), &[params], &spec)?;
    Ok(encode_png(&seq.frames[0])?)
}

async fn relight_handler(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: RelightRequest = parse_body(&body)?;
    if st.data.get(&req.pair_id).is_none() {
        return Err(ApiError::unknown_pair(&req.pair_id));
    }
    let (data, spec) = (st.data.clone(), st.spec.clone());
    let png = render(&st, move || render_relight(&data, &spec, &req)).await?;
    Ok(png_response(png))
}

fn append(builder: &mut tar::Builder<Vec<u8>>, path: &str, data: &[u8]) -> std::io::Result<()> {
    let mut h = tar::Header::new_gnu();
    h.set_size(data.len() as u64);
    h.set_mode(0o644);
    h.set_mtime(0);
    h.set_uid(0);
    h.set_gid(0);
    h.set_cksum();
    builder.append_data(&mut h, path, data)
}

/// Renders a grid into a tar archive of PNG frames plus `manifest.jsonl`.
pub fn render_sequence(data: &DataRoot, base: &ToneMapSpec, req: &SequenceRequest) -> ApiResult<Vec<u8>> {
    let grid = match &req.grid {
        GridArg::Named(n) if n == "real-default" => GridSpec::real_default(),
        GridArg::Named(n) if n == "synth-default" => GridSpec::synth_default(),
        GridArg::Named(n) => return Err(ApiError::field("grid", format!("unknown grid name {n:?}"))),
        GridArg::Spec(g) => g.clone(),
    };
    grid.validate().map_err(|e| ApiError::field("grid", e.to_string()))?;
    let modes = match req.tonemap_mode {
        Some(m) => vec![m],
        None => vec![ToneMapMode::Together, ToneMapMode::Separate],
    };
    if grid.inflation_factor() * modes.len() > MAX_SEQUENCE_FRAMES {
        return Err(ApiError::field(
            "grid",
            format!("grid would render more than {MAX_SEQUENCE_FRAMES} frames"),
        ));
    }
    let loaded = data.get(&req.pair_id).ok_or_else(|| ApiError::unknown_pair(&req.pair_id))?;
    let pair = loaded.pair(req.full_resolution);
    let frames = inflate(pair, &grid, base, &modes)?;
    let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string());
    let mut builder = tar::Builder::new(Vec::new());
    let mut rows = Vec::with_capacity(frames.len());
    for f in &frames {
        let rel = frame_path(&pair.pair_id, f.mode, &f.params, f.color_index);
        let name = rel.to_string_lossy().replace('\\', "/");
        append(&mut builder, &name, &encode_png(&f.image)?).map_err(io)?;
        rows.push(FrameRecord {
            pair_id: pair.pair_id.clone(),
            domain: pair.domain,
            params: f.params,
            color_index: f.color_index,
            tonemap_mode: f.mode,
            path: rel,
        });
    }
    let mut manifest = Vec::new();
    write_manifest_to(&rows, &mut manifest)?;
    append(&mut builder, "manifest.jsonl", &manifest).map_err(io)?;
    builder.into_inner().map_err(io)
}

async fn sequence_handler(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: SequenceRequest = parse_body(&body)?;
    if st.data.get(&req.pair_id).is_none() {
        return Err(ApiError::unknown_pair(&req.pair_id));
    }
    let (data, spec) = (st.data.clone(), st.spec.clone());
    let archive = render(&st, move || render_sequence(&data, &spec, &req)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-tar")], Body::from(archive)).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/pairs", get(list_pairs))
        .route("/pairs/{id}/meta", get(pair_meta))
        .route("/pairs/{id}/thumb", get(thumb))
        .route("/relight", post(relight_handler))
        .route("/sequence", post(sequence_handler))
        .with_state(state)
}

/// Loads the data root, binds `cfg.listen` and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    cfg.tonemap.validate()?;
    let data = DataRoot::open(&cfg.data_root, cfg.preview_long_edge)?;
    let listener = tokio::net::TcpListener::bind(cfg.listen)
        .await
        .map_err(|e| format!("cannot listen on {}: {e}", cfg.listen))?;
    log::info!("listening on {}", listener.local_addr()?);
    let app = router(AppState::new(data, cfg.tonemap, cfg.max_concurrent));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
