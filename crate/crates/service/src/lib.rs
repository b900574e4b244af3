//! HTTP backend for proofreading a finished run directory. Mutations are
//! serialized; every read works on the snapshot current when it started.

use std::io::Cursor;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axonvox_core::instseg::AxonRecord;
use axonvox_core::morpho::{self, MorphoParams};
use axonvox_core::stats::{self, EvalCounts};
use axonvox_core::volume::MYELIN;
use axonvox_core::{Error as CoreError, Voxel};
use axonvox_pipeline::edits::EditOp;
use axonvox_pipeline::mesh;
use axonvox_pipeline::session::{Session, Snapshot};
use axonvox_pipeline::PipelineError;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

pub struct AppState {
    session: Mutex<Session>,
    current: RwLock<Snapshot>,
}

impl AppState {
    pub fn new(session: Session) -> Arc<Self> {
        let current = RwLock::new(session.snapshot());
        Arc::new(AppState {
            session: Mutex::new(session),
            current,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Run a mutation on a blocking thread and publish the result.
    async fn write<T: Send + 'static>(
        self: &Arc<Self>,
        f: impl FnOnce(&mut Session) -> Result<T, PipelineError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let st = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let mut s = st.session.lock().expect("session lock");
            let r = f(&mut s);
            *st.current.write().expect("snapshot lock") = s.snapshot();
            r
        })
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Edit(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Core(CoreError::MissingLabel(_)) => StatusCode::NOT_FOUND,
            PipelineError::Core(CoreError::OutOfBounds { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Core(CoreError::InvalidParam(_)) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        PipelineError::Core(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/volume/meta", get(meta))
        .route("/slice/{z}", get(slice))
        .route("/labels/{id}/mesh", get(label_mesh))
        .route("/records", get(records))
        .route("/edits", post(edit))
        .route("/edits/undo", post(undo))
        .route("/seeds", post(seeds))
        .route("/morphometry/{axon_id}", get(morphometry))
        .route("/evaluation", post(evaluation))
        .route("/manifest", get(manifest))
        .with_state(state)
}

/// Open `dir` and build the router.
pub fn app(dir: &Path) -> Result<Router, PipelineError> {
    Ok(router(AppState::new(Session::open(dir)?)))
}

/// Serve `dir` on `127.0.0.1:port` until ctrl-c.
pub async fn serve(dir: &Path, port: u16) -> anyhow::Result<()> {
    let app = app(dir)?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    log::info!("serving {} on http://{addr}", dir.display());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub voxel_size_nm: [f64; 3],
    pub labels: Vec<u32>,
    pub version: u64,
    pub undo_depth: usize,
    pub layers: Vec<String>,
}

async fn meta(State(st): State<Arc<AppState>>) -> Json<VolumeMeta> {
    let s = st.snapshot();
    Json(VolumeMeta {
        dims: s.raw.dims.to_array(),
        voxel_size_nm: s.raw.voxel_size.to_array(),
        labels: s.axons.distinct_labels(),
        version: s.version,
        undo_depth: s.undo_depth,
        layers: ["raw", "myelin", "axons", "myelin_inst"].map(String::from).to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Raw,
    Myelin,
    Axons,
    MyelinInst,
}

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    #[serde(default = "default_layer")]
    pub layer: Layer,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_layer() -> Layer {
    Layer::Raw
}

fn default_alpha() -> f64 {
    0.5
}

/// Overlay colour of a label, stable across sessions.
pub fn label_color(label: u32) -> [u8; 3] {
    let mut h = (label as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    [(h & 0x7f) as u8 + 0x80, ((h >> 8) & 0x7f) as u8 + 0x80, ((h >> 16) & 0x7f) as u8 + 0x80]
}

pub const MYELIN_COLOR: [u8; 3] = [255, 0, 255];

pub fn gray(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGB rendering of slice `z`: the raw slice, with the chosen label layer
/// blended in at `alpha` where it is nonzero.
pub fn render_slice(s: &Snapshot, z: usize, layer: Layer, alpha: f64) -> Vec<u8> {
    let d = s.raw.dims;
    let raw = s.raw.slice(z);
    let labels: Option<&[u32]> = match layer {
        Layer::Raw => None,
        Layer::Myelin => Some(s.semantic.slice(z)),
        Layer::Axons => Some(s.axons.slice(z)),
        Layer::MyelinInst => Some(s.myelin_instances.slice(z)),
    };
    let mut px = Vec::with_capacity(d.slice_len() * 3);
    for i in 0..d.slice_len() {
        let g = gray(raw[i]);
        let l = labels.map_or(0, |ls| ls[i]);
        if l == 0 {
            px.extend_from_slice(&[g, g, g]);
            continue;
        }
        let c = if layer == Layer::Myelin && l == MYELIN { MYELIN_COLOR } else { label_color(l) };
        for ch in c {
            px.push(((1.0 - alpha) * g as f64 + alpha * ch as f64).round() as u8);
        }
    }
    px
}

async fn slice(
    State(st): State<Arc<AppState>>,
    UrlPath(z): UrlPath<usize>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<Response> {
    if !(0.0..=1.0).contains(&q.alpha) {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("alpha {} outside [0, 1]", q.alpha)));
    }
    let s = st.snapshot();
    let d = s.raw.dims;
    if z >= d.nz {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("slice {z} outside 0..{}", d.nz)));
    }
    let px = render_slice(&s, z, q.layer, q.alpha);
    let img = image::RgbImage::from_raw(d.nx as u32, d.ny as u32, px)
        .ok_or_else(|| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "bad slice buffer".into()))?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], buf.into_inner()).into_response())
}

async fn label_mesh(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<u32>) -> ApiResult<Json<mesh::Mesh>> {
    let s = st.snapshot();
    let m = tokio::task::spawn_blocking(move || mesh::label_mesh(&s.axons, id))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(m))
}

async fn records(State(st): State<Arc<AppState>>) -> Json<Vec<AxonRecord>> {
    Json(st.snapshot().records.to_vec())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditResponse {
    pub version: u64,
    pub undo_depth: usize,
    pub changed_voxels: usize,
    pub created: Vec<u32>,
}

async fn edit(State(st): State<Arc<AppState>>, Json(op): Json<EditOp>) -> ApiResult<Json<EditResponse>> {
    let undo = st.write(move |s| s.apply(op)).await?;
    let s = st.snapshot();
    Ok(Json(EditResponse {
        version: s.version,
        undo_depth: s.undo_depth,
        changed_voxels: undo.changes.len(),
        created: undo.created,
    }))
}

#[derive(Debug, Default, Deserialize)]
pub struct UndoRequest {
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub timestamp: String,
}

async fn undo(State(st): State<Arc<AppState>>, body: Option<Json<UndoRequest>>) -> ApiResult<Json<EditResponse>> {
    let req = body.map(|b| b.0).unwrap_or_default();
    st.write(move |s| s.undo(req.author, req.timestamp))
        .await
        .map_err(|e| if e.1.contains("nothing to undo") { ApiError(StatusCode::CONFLICT, e.1) } else { e })?;
    let s = st.snapshot();
    Ok(Json(EditResponse {
        version: s.version,
        undo_depth: s.undo_depth,
        changed_voxels: 0,
        created: Vec::new(),
    }))
}

async fn seeds(State(st): State<Arc<AppState>>, Json(seeds): Json<Vec<Voxel>>) -> ApiResult<Json<Vec<AxonRecord>>> {
    let recs = st.write(move |s| s.grow(seeds, String::new(), String::new())).await?;
    Ok(Json(recs))
}

async fn morphometry(
    State(st): State<Arc<AppState>>,
    UrlPath(axon_id): UrlPath<u32>,
) -> ApiResult<Json<morpho::AxonOutcome>> {
    let s = st.snapshot();
    let length_threshold_um = st.session.lock().expect("session lock").config().morpho.length_threshold_um;
    let p = MorphoParams { length_threshold_um };
    let o = tokio::task::spawn_blocking(move || morpho::axon_morphometry(axon_id, &s.axons, &s.myelin_instances, &p))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(o))
}

async fn evaluation(Json(c): Json<EvalCounts>) -> ApiResult<Json<stats::Prf1>> {
    stats::prf1(c)
        .map(Json)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))
}

async fn manifest(State(st): State<Arc<AppState>>) -> Json<axonvox_pipeline::artifacts::Manifest> {
    Json((*st.snapshot().manifest).clone())
}
