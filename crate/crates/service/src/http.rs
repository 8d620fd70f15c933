//! HTTP routes.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use proxtrace_core::exposure::{CovidStatus, ExposureError, Notification, RegistrationForm, UserRecord};
use proxtrace_core::geo::{GeoPoint, GeoError, StoreError, UserId};
use proxtrace_core::lockdown::{BoundingBox, LockdownAssessment, Region, Verdict};
use proxtrace_core::platform::PlatformError;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::node::Node;
use crate::ServiceError;

pub(crate) struct Shared {
    pub(crate) node: RwLock<Node>,
    fresh: Mutex<HashMap<String, Instant>>,
    interval: Duration,
}

/// Handle on the service state shared by all connections.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Shared>);

impl AppState {
    pub fn new(node: Node, interval: Duration) -> Self {
        Self(Arc::new(Shared {
            node: RwLock::new(node),
            fresh: Mutex::new(HashMap::new()),
            interval,
        }))
    }

    /// Runs `f` against a consistent read view of the node.
    pub fn read<T>(&self, f: impl FnOnce(&Node) -> T) -> T {
        f(&self.0.node.read())
    }

    /// Recomputes a region's assessment on a blocking thread.
    pub async fn reassess(&self, region_id: &str) -> Result<LockdownAssessment, ServiceError> {
        let state = self.clone();
        let id = region_id.to_owned();
        let assessment = tokio::task::spawn_blocking(move || state.0.node.write().assess(&id))
            .await
            .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
        self.0.fresh.lock().insert(region_id.to_owned(), Instant::now());
        Ok(assessment)
    }

    /// Cached assessment unless missing, older than the cadence interval, or `force`d.
    pub async fn current_assessment(&self, region_id: &str, force: bool) -> Result<LockdownAssessment, ServiceError> {
        let cached = self.read(|n| n.platform().latest_assessment(region_id).map(|a| a.cloned()))?;
        let recent = self
            .0
            .fresh
            .lock()
            .get(region_id)
            .is_some_and(|t| t.elapsed() < self.0.interval);
        match cached {
            Some(a) if recent && !force => Ok(a),
            _ => self.reassess(region_id).await,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    accepted: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            accepted: None,
        }
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        let msg = e.to_string();
        match e {
            PlatformError::UnknownUser(_) | PlatformError::UnknownRegion(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            PlatformError::Registration(ExposureError::DuplicateMac(_) | ExposureError::DuplicateUser(_)) => {
                ApiError::new(StatusCode::CONFLICT, "conflict", msg)
            }
            PlatformError::Registration(ExposureError::UnknownUser(_)) => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg),
            PlatformError::Registration(ExposureError::InvalidMac(_)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", msg)
            }
            PlatformError::Fix(StoreError::OutOfOrder { .. }) => ApiError::new(StatusCode::CONFLICT, "ordering", msg),
            PlatformError::Fix(StoreError::DuplicateTick { .. }) => ApiError::new(StatusCode::CONFLICT, "duplicate_tick", msg),
            PlatformError::Geo(GeoError::Latitude(_) | GeoError::Longitude(_)) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", msg)
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Platform(p) => p.into(),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(n) = self.accepted {
            body["accepted"] = json!(n);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/users", post(register))
        .route("/api/users/{id}/status", post(update_status))
        .route("/api/users/{id}/notifications", get(notifications))
        .route("/api/fixes", post(ingest_fixes))
        .route("/api/regions", get(regions))
        .route("/api/regions/{id}/assessment", get(assessment))
        .route("/api/regions/{id}/clusters", get(clusters))
        .route("/api/bluetooth/scan", post(bluetooth_scan))
        .route("/api/stats", get(stats))
        .with_state(state)
}

async fn register(State(state): State<AppState>, Json(form): Json<RegistrationForm>) -> Result<(StatusCode, Json<UserRecord>), ApiError> {
    let record = state.0.node.write().register(&form)?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Deserialize)]
struct StatusBody {
    status: CovidStatus,
}

async fn update_status(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<StatusBody>) -> ApiResult<UserRecord> {
    let (record, _) = state.0.node.write().update_status(&UserId(id), body.status)?;
    Ok(Json(record))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixBody {
    pub user_id: UserId,
    pub lat: f64,
    pub lon: f64,
    pub wall_time: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixAck {
    pub user_id: UserId,
    pub tick: u64,
    pub wall_time: i64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixUpload {
    One(FixBody),
    Many(Vec<FixBody>),
}

async fn ingest_fixes(State(state): State<AppState>, Json(upload): Json<FixUpload>) -> Result<(StatusCode, Response), ApiError> {
    let ingest = |node: &mut Node, f: &FixBody| -> Result<FixAck, ApiError> {
        let point = GeoPoint::new(f.lat, f.lon).map_err(|e| ApiError::from(PlatformError::Geo(e)))?;
        let fix = node.ingest_fix(&f.user_id, point, f.wall_time)?;
        Ok(FixAck {
            user_id: fix.user_id,
            tick: fix.tick,
            wall_time: fix.wall_time,
        })
    };
    let mut node = state.0.node.write();
    match upload {
        FixUpload::One(f) => Ok((StatusCode::CREATED, Json(ingest(&mut node, &f)?).into_response())),
        FixUpload::Many(batch) => {
            let mut acks = Vec::with_capacity(batch.len());
            for f in &batch {
                match ingest(&mut node, f) {
                    Ok(a) => acks.push(a),
                    Err(mut e) => {
                        e.accepted = Some(acks.len());
                        return Err(e);
                    }
                }
            }
            Ok((StatusCode::CREATED, Json(acks).into_response()))
        }
    }
}

#[derive(Deserialize)]
struct After {
    after: Option<u64>,
}

async fn notifications(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<After>) -> ApiResult<Vec<Notification>> {
    Ok(Json(state.read(|n| n.poll_notifications(&UserId(id), q.after))?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSummary {
    #[serde(flatten)]
    pub region: Region,
    pub aeo_total: Option<u64>,
    pub verdict: Option<Verdict>,
    pub assessed_at: Option<i64>,
}

async fn regions(State(state): State<AppState>) -> ApiResult<Vec<RegionSummary>> {
    Ok(Json(state.read(|n| {
        n.platform()
            .regions()
            .map(|r| {
                let latest = n.platform().latest_assessment(&r.region_id).ok().flatten();
                RegionSummary {
                    region: r.clone(),
                    aeo_total: latest.map(|a| a.aeo_total),
                    verdict: latest.map(|a| a.verdict),
                    assessed_at: latest.map(|a| a.assessed_at),
                }
            })
            .collect()
    })))
}

#[derive(Deserialize)]
struct Refresh {
    #[serde(default)]
    refresh: bool,
}

async fn assessment(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<Refresh>) -> ApiResult<LockdownAssessment> {
    Ok(Json(state.current_assessment(&id, q.refresh).await?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterView {
    pub index: usize,
    pub centroid: GeoPoint,
    pub member_count: usize,
    pub aeo: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClustersResponse {
    pub region_id: String,
    pub bounding_box: BoundingBox,
    pub verdict: Verdict,
    pub aeo_total: u64,
    pub threshold: u64,
    pub assessed_at: i64,
    pub clusters: Vec<ClusterView>,
}

async fn clusters(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<Refresh>) -> ApiResult<ClustersResponse> {
    let a = state.current_assessment(&id, q.refresh).await?;
    let bounding_box = state.read(|n| n.platform().region(&id).map(|r| r.bounding_box))?;
    let clusters = a
        .clusters
        .centroids
        .iter()
        .enumerate()
        .map(|(index, c)| ClusterView {
            index,
            centroid: *c,
            member_count: a.clusters.member_count(index),
            aeo: a.aeo_per_cluster.get(&index).copied().unwrap_or(0),
        })
        .collect();
    Ok(Json(ClustersResponse {
        region_id: a.region_id,
        bounding_box,
        verdict: a.verdict,
        aeo_total: a.aeo_total,
        threshold: a.threshold,
        assessed_at: a.assessed_at,
        clusters,
    }))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScanBody {
    Macs(Vec<String>),
    Scan {
        macs: Vec<String>,
        #[serde(default)]
        scanner_id: Option<UserId>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMatch {
    pub user_id: UserId,
    pub status: CovidStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResponse {
    pub matches: Vec<ScanMatch>,
    pub malformed: usize,
}

async fn bluetooth_scan(State(state): State<AppState>, Json(body): Json<ScanBody>) -> ApiResult<ScanResponse> {
    let (macs, scanner) = match body {
        ScanBody::Macs(m) => (m, None),
        ScanBody::Scan { macs, scanner_id } => (macs, scanner_id),
    };
    let found = state.0.node.write().bluetooth_scan(scanner.as_ref(), &macs)?;
    Ok(Json(ScanResponse {
        matches: found
            .matches
            .into_iter()
            .map(|(user_id, status)| ScanMatch { user_id, status })
            .collect(),
        malformed: found.malformed,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub users: usize,
    pub fixes: usize,
    pub notifications: usize,
    pub log_sequence: u64,
}

async fn stats(State(state): State<AppState>) -> Json<Stats> {
    Json(state.read(|n| Stats {
        users: n.platform().registry().len(),
        fixes: n.platform().fixes().len(),
        notifications: n.platform().notifications().len(),
        log_sequence: n.log_sequence(),
    }))
}
