//! HTTP/JSON render and tracking service over a frozen checkpoint.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::Engine;
use lru::LruCache;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Error;
use crate::field::GearedModel;
use crate::geometry::{Aabb, Mat3, Vec3};
use crate::io::CameraEntry;
use crate::render::{render_layers, Camera, Layer, LayerSet, MarchSettings};
use crate::rle::RleMask;
use crate::semantic::DEFAULT_TAU_SIM;
use crate::track::{MaskStatus, TrackCounters, TrackEntry, TrackSession};

pub const ROTATION_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Largest accepted output image, in pixels after striding.
    pub max_pixels: usize,
    pub session_cap: usize,
    pub tau_sim: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_pixels: 512 * 512,
            session_cap: 64,
            tau_sim: DEFAULT_TAU_SIM,
        }
    }
}

/// Camera by training-view id or explicit pose and intrinsics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseSpec {
    View {
        view: String,
    },
    Explicit {
        rotation: [f64; 9],
        translation: [f64; 3],
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenderRequest {
    pub pose: PoseSpec,
    pub time: f64,
    #[serde(default = "default_layers")]
    pub layers: Vec<String>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_layers() -> Vec<String> {
    vec!["rgb".into()]
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenderResponse {
    pub width: usize,
    pub height: usize,
    /// Layer name to base64 file bytes.
    pub layers: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClickRequest {
    pub pose: PoseSpec,
    pub time: f64,
    pub pixel: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub track_id: u64,
    pub pose: PoseSpec,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
    pub mask: RleMask,
    pub status: MaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted_at: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub render_requests: u64,
    pub track_renders: u64,
    pub track_decodes: u64,
    pub track_cache_hits: u64,
    pub sessions: u64,
    pub evicted: u64,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub track_status: Option<MaskStatus>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            track_status: None,
        }
    }

    fn bad(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        let status = match e.exit_code() {
            1 => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(s) = self.track_status {
            body["status"] = serde_json::to_value(s).unwrap();
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub struct AppState {
    pub model: GearedModel<f32>,
    pub cameras: Vec<CameraEntry>,
    pub settings: MarchSettings,
    pub config: ServiceConfig,
    sessions: Mutex<LruCache<u64, Arc<Mutex<TrackSession>>>>,
    next_id: AtomicU64,
    render_requests: AtomicU64,
    track_renders: AtomicU64,
    track_decodes: AtomicU64,
    track_cache_hits: AtomicU64,
    evicted: AtomicU64,
}

impl AppState {
    pub fn new(model: GearedModel<f32>, cameras: Vec<CameraEntry>, config: ServiceConfig) -> Self {
        let settings = MarchSettings::new(model.config().samples_per_ray);
        let cap = NonZeroUsize::new(config.session_cap.max(1)).unwrap();
        Self {
            model,
            cameras,
            settings,
            config,
            sessions: Mutex::new(LruCache::new(cap)),
            next_id: AtomicU64::new(1),
            render_requests: AtomicU64::new(0),
            track_renders: AtomicU64::new(0),
            track_decodes: AtomicU64::new(0),
            track_cache_hits: AtomicU64::new(0),
            evicted: AtomicU64::new(0),
        }
    }

    pub fn stats(&self) -> ServiceStats {
        ServiceStats {
            render_requests: self.render_requests.load(Ordering::Relaxed),
            track_renders: self.track_renders.load(Ordering::Relaxed),
            track_decodes: self.track_decodes.load(Ordering::Relaxed),
            track_cache_hits: self.track_cache_hits.load(Ordering::Relaxed),
            sessions: self.sessions.lock().unwrap().len() as u64,
            evicted: self.evicted.load(Ordering::Relaxed),
        }
    }

    pub fn resolve_pose(&self, pose: &PoseSpec) -> ApiResult<Camera> {
        Ok(resolve_pose(pose, &self.cameras)?)
    }

    fn check_size(&self, camera: &Camera, stride: usize) -> ApiResult<()> {
        let px = camera.width.div_ceil(stride) * camera.height.div_ceil(stride);
        if px > self.config.max_pixels {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("{px} pixels exceed the limit of {}", self.config.max_pixels),
            ));
        }
        Ok(())
    }

    fn render_time(&self, time: f64) -> ApiResult<f64> {
        let last = (self.model.config().frame_count - 1) as f64;
        if !(time.is_finite() && (0.0..=last).contains(&time)) {
            return Err(ApiError::bad(format!("time {time} outside [0, {last}]")));
        }
        Ok(time)
    }

    fn frame(&self, time: f64) -> ApiResult<usize> {
        let t = self.render_time(time)?;
        if t.fract() != 0.0 {
            return Err(ApiError::bad(format!("tracking needs an integer frame, got {time}")));
        }
        Ok(t as usize)
    }

    pub fn render(&self, req: &RenderRequest) -> ApiResult<RenderResponse> {
        let camera = self.resolve_pose(&req.pose)?;
        let time = self.render_time(req.time)?;
        if req.stride == 0 {
            return Err(ApiError::bad("stride must be at least 1"));
        }
        self.check_size(&camera, req.stride)?;
        let layers: Vec<Layer> = req
            .layers
            .iter()
            .map(|l| l.parse())
            .collect::<crate::Result<_>>()
            .map_err(|e| ApiError::bad(e.to_string()))?;
        self.render_requests.fetch_add(1, Ordering::Relaxed);
        let r = render_layers(&self.model, &camera, time, LayerSet::only(&layers), req.stride, &self.settings);
        let b64 = base64::engine::general_purpose::STANDARD;
        Ok(RenderResponse {
            width: r.width,
            height: r.height,
            layers: r
                .encode()
                .into_iter()
                .map(|(l, bytes)| (l.name().to_string(), b64.encode(bytes)))
                .collect(),
        })
    }

    fn record(&self, before: TrackCounters, after: TrackCounters) {
        self.track_renders.fetch_add(after.renders - before.renders, Ordering::Relaxed);
        self.track_decodes.fetch_add(after.decodes - before.decodes, Ordering::Relaxed);
        self.track_cache_hits.fetch_add(after.cache_hits - before.cache_hits, Ordering::Relaxed);
    }

    pub fn click(&self, req: &ClickRequest) -> ApiResult<TrackResponse> {
        let camera = self.resolve_pose(&req.pose)?;
        let time = self.frame(req.time)?;
        self.check_size(&camera, 1)?;
        let [u, v] = req.pixel;
        if !(u.fract() == 0.0 && v.fract() == 0.0 && u >= 0.0 && v >= 0.0 && u < camera.width as f64 && v < camera.height as f64) {
            return Err(ApiError::bad(format!(
                "pixel [{u}, {v}] is not inside {}x{}",
                camera.width, camera.height
            )));
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let session = TrackSession::click(
            id,
            &self.model,
            &camera,
            time,
            (u as usize, v as usize),
            self.config.tau_sim,
            &self.settings,
        )?;
        self.record(TrackCounters::default(), session.counters);
        let entry = session.source_entry().clone();
        if entry.status == MaskStatus::NoSurface {
            return Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                message: "no surface under the clicked pixel".into(),
                track_status: Some(MaskStatus::NoSurface),
            });
        }
        let mut sessions = self.sessions.lock().unwrap();
        if sessions.push(id, Arc::new(Mutex::new(session))).is_some() {
            self.evicted.fetch_add(1, Ordering::Relaxed);
        }
        Ok(response(Some(id), &entry))
    }

    pub fn query(&self, req: &QueryRequest) -> ApiResult<TrackResponse> {
        let session = self.session(req.track_id)?;
        let camera = self.resolve_pose(&req.pose)?;
        let time = self.frame(req.time)?;
        self.check_size(&camera, 1)?;
        let mut s = session.lock().unwrap();
        let before = s.counters;
        let entry = s.query(&self.model, &camera, time, &self.settings)?;
        self.record(before, s.counters);
        Ok(response(None, &entry))
    }

    fn session(&self, id: u64) -> ApiResult<Arc<Mutex<TrackSession>>> {
        self.sessions
            .lock()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown track id {id}")))
    }

    pub fn remove(&self, id: u64) -> ApiResult<()> {
        self.sessions
            .lock()
            .unwrap()
            .pop(&id)
            .map(|_| ())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown track id {id}")))
    }

    pub fn scene_info(&self) -> SceneInfo {
        let cfg = self.model.config();
        SceneInfo {
            frame_count: cfg.frame_count,
            bounds: cfg.bounds,
            n_gear: cfg.n_gear,
            semantic_dim: cfg.semantic_dim,
            cameras: self
                .cameras
                .iter()
                .map(|c| CameraInfo {
                    id: c.id.clone(),
                    holdout: c.holdout,
                    rotation: c.camera.rotation.to_row_major(),
                    translation: c.camera.translation.0,
                    fx: c.camera.fx,
                    fy: c.camera.fy,
                    cx: c.camera.cx,
                    cy: c.camera.cy,
                    width: c.camera.width,
                    height: c.camera.height,
                })
                .collect(),
        }
    }
}

/// Camera for a pose spec; explicit rotations must be orthonormal to
/// [`ROTATION_TOLERANCE`].
pub fn resolve_pose(pose: &PoseSpec, cameras: &[CameraEntry]) -> crate::Result<Camera> {
    match pose {
        PoseSpec::View { view } => cameras
            .iter()
            .find(|c| &c.id == view)
            .map(|c| c.camera.clone())
            .ok_or_else(|| Error::Contract(format!("unknown view `{view}`"))),
        PoseSpec::Explicit {
            rotation,
            translation,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        } => {
            let cam = Camera {
                fx: *fx,
                fy: *fy,
                cx: *cx,
                cy: *cy,
                width: *width,
                height: *height,
                rotation: Mat3::from_row_major(rotation).ok_or_else(|| Error::Contract("rotation needs 9 values".into()))?,
                translation: Vec3::new(translation[0], translation[1], translation[2]),
            };
            cam.validate(ROTATION_TOLERANCE)?;
            Ok(cam)
        }
    }
}

pub fn response(track_id: Option<u64>, e: &TrackEntry) -> TrackResponse {
    TrackResponse {
        track_id,
        mask: e.mask.rle(),
        status: e.status,
        halted_at: e.halted_at,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub id: String,
    pub holdout: bool,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub frame_count: usize,
    pub bounds: Aabb,
    pub n_gear: usize,
    pub semantic_dim: usize,
    pub cameras: Vec<CameraInfo>,
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("malformed request: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn scene(State(st): State<Arc<AppState>>) -> Json<SceneInfo> {
    Json(st.scene_info())
}

async fn stats(State(st): State<Arc<AppState>>) -> Json<ServiceStats> {
    Json(st.stats())
}

async fn render(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<RenderResponse>> {
    let req: RenderRequest = parse(&body)?;
    Ok(Json(blocking(move || st.render(&req)).await?))
}

async fn click(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<TrackResponse>> {
    let req: ClickRequest = parse(&body)?;
    Ok(Json(blocking(move || st.click(&req)).await?))
}

async fn query(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<TrackResponse>> {
    let req: QueryRequest = parse(&body)?;
    Ok(Json(blocking(move || st.query(&req)).await?))
}

async fn remove(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown track id {id}")))?;
    st.remove(id)?;
    Ok(Json(json!({})))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scene", get(scene))
        .route("/stats", get(stats))
        .route("/render", post(render))
        .route("/track/click", post(click))
        .route("/track/query", post(query))
        .route("/track/{id}", delete(remove))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
