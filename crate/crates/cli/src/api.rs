//! JSON over HTTP for live trials. Every response body carries `schema_version`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lago_core::inference::{confidence_bands_at_level, confidence_set_at_level, DEFAULT_SET_INCREMENT};
use lago_core::model::parse_f64_list;
use lago_core::{ComponentBounds, CostFunction, TargetSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::covariates;
use crate::config::Search;
use crate::store::{CreateTrial, RecommendParams, RowInput, Store, StoreError};

pub const SCHEMA_VERSION: u32 = 1;

pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn bad(field: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field: Some(field.to_owned()),
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, field) = match e {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, None),
            StoreError::Conflict(_) => (StatusCode::CONFLICT, None),
            StoreError::Invalid { field, .. } => (StatusCode::BAD_REQUEST, Some(field)),
            StoreError::Model(_) => (StatusCode::UNPROCESSABLE_ENTITY, None),
            StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        Self { status, field, message }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": {
                "status": self.status.as_u16(),
                "field": self.field,
                "message": self.message,
            }
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<(StatusCode, Json<Value>), ApiError>;

fn reply(status: StatusCode, body: impl Serialize) -> ApiResult {
    let mut v = serde_json::to_value(body).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        field: None,
        message: e.to_string(),
    })?;
    if let Value::Object(m) = &mut v {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Ok((status, Json(v)))
}

/// Deserializes a request body, reporting the path of the first bad field.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_owned() } else { path };
        ApiError::bad(&field, e.into_inner().to_string())
    })
}

fn parse_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse().map_err(|_| ApiError::bad("id", format!("`{raw}` is not a trial id")))
}

fn parse_stage(raw: &str) -> Result<u32, ApiError> {
    raw.parse().map_err(|_| ApiError::bad("stage", format!("`{raw}` is not a stage number")))
}

/// Typed access to query parameters; unknown names are rejected.
struct Params(BTreeMap<String, String>);

impl Params {
    fn new(q: BTreeMap<String, String>, allowed: &[&str]) -> Result<Self, ApiError> {
        if let Some(k) = q.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ApiError::bad(k, format!("unknown parameter; expected one of {}", allowed.join(", "))));
        }
        Ok(Self(q))
    }

    fn get<T>(&self, name: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ApiError> {
        self.0
            .get(name)
            .map(|raw| parse(raw).map_err(|m| ApiError::bad(name, m)))
            .transpose()
    }

    fn f64(&self, name: &str) -> Result<Option<f64>, ApiError> {
        self.get(name, |s| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
    }

    fn list(&self, name: &str) -> Result<Option<Vec<f64>>, ApiError> {
        self.get(name, |s| parse_f64_list(s).map_err(|e| e.to_string()))
    }

    fn bounds(&self) -> Result<Option<ComponentBounds>, ApiError> {
        self.get("bounds", |s| s.parse::<ComponentBounds>().map_err(|e| e.to_string()))
    }

    fn cost(&self) -> Result<Option<CostFunction>, ApiError> {
        self.get("cost", |s| s.parse::<CostFunction>().map_err(|e| e.to_string()))
    }

    fn level(&self) -> Result<f64, ApiError> {
        let level = self.f64("level")?.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            return Err(ApiError::bad("level", "must be in (0, 1)"));
        }
        Ok(level)
    }

    fn increment(&self, default: Option<f64>) -> Result<Option<f64>, ApiError> {
        match self.f64("increment")?.or(default) {
            Some(v) if !(v > 0.0) => Err(ApiError::bad("increment", "must be positive")),
            other => Ok(other),
        }
    }
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/trials", post(create_trial).get(list_trials))
        .route("/api/trials/{id}", get(get_trial))
        .route("/api/trials/{id}/stages/{k}/rows", post(append_rows))
        .route("/api/trials/{id}/stages/{k}/lock", post(lock_stage))
        .route("/api/trials/{id}/fit", get(fit))
        .route("/api/trials/{id}/recommend", get(recommend))
        .route("/api/trials/{id}/confset", get(confset))
        .route("/api/trials/{id}/bands", get(bands))
        .with_state(store)
}

async fn create_trial(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult {
    let req: CreateTrial = parse_body(&body)?;
    let trial = store.create(req)?;
    reply(StatusCode::CREATED, json!({ "trial": trial }))
}

async fn list_trials(State(store): State<Arc<Store>>) -> ApiResult {
    reply(StatusCode::OK, json!({ "trials": store.list() }))
}

async fn get_trial(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult {
    let id = parse_id(&id)?;
    let trial = store.with_trial(id, |t| Ok(t.summary()))?;
    reply(StatusCode::OK, json!({ "trial": trial }))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RowsBody {
    rows: Vec<RowInput>,
}

async fn append_rows(
    State(store): State<Arc<Store>>,
    Path((id, k)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let (id, k) = (parse_id(&id)?, parse_stage(&k)?);
    let req: RowsBody = parse_body(&body)?;
    let n = req.rows.len();
    let trial = store.append_rows(id, k, req.rows)?;
    reply(StatusCode::OK, json!({ "appended": n, "stage": k, "trial": trial }))
}

async fn lock_stage(
    State(store): State<Arc<Store>>,
    Path((id, k)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let (id, k) = (parse_id(&id)?, parse_stage(&k)?);
    let params: RecommendParams = if body.iter().all(u8::is_ascii_whitespace) {
        RecommendParams::default()
    } else {
        parse_body(&body)?
    };
    let snapshot = store.lock_stage(id, k, &params)?;
    reply(StatusCode::OK, json!({ "snapshot": snapshot }))
}

async fn fit(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult {
    let id = parse_id(&id)?;
    let (fit, sizes) = store.with_trial(id, |t| Ok((t.fit()?, t.dataset()?.stage_sizes())))?;
    reply(StatusCode::OK, json!({ "trial_id": id, "stage_sizes": sizes, "fit": fit }))
}

/// What-if recommendation: nothing is written to the store.
async fn recommend(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult {
    let id = parse_id(&id)?;
    let q = Params::new(q, &["theta", "cost", "bounds", "z", "increment", "search"])?;
    let params = RecommendParams {
        theta: q.f64("theta")?,
        cost: q.cost()?,
        bounds: q.bounds()?,
        z: q.list("z")?,
        increment: q.increment(None)?,
        search: q.get("search", |s| match s {
            "auto" => Ok(Search::Auto),
            "grid" => Ok(Search::Grid),
            _ => Err(format!("`{s}` is not `auto` or `grid`")),
        })?,
    };
    let (rec, theta, z) = store.with_trial(id, |t| {
        let fit = t.fit()?;
        t.recommend(&fit, &params)
    })?;
    reply(StatusCode::OK, json!({ "trial_id": id, "theta": theta, "z": z, "recommendation": rec }))
}

async fn confset(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult {
    let id = parse_id(&id)?;
    let q = Params::new(q, &["theta", "bounds", "z", "increment", "level", "cost"])?;
    let (theta_q, bounds_q, z_q, cost_q) = (q.f64("theta")?, q.bounds()?, q.list("z")?, q.cost()?);
    let level = q.level()?;
    let body = store.with_trial(id, |t| {
        let fit = t.fit()?;
        let d = &t.meta.defaults;
        let theta = theta_q.or(d.theta).ok_or_else(|| invalid("theta", "required"))?;
        let target = TargetSpec::new(theta, fit.link).map_err(|e| invalid("theta", e.to_string()))?;
        let bounds = t.bounds(bounds_q.as_ref())?;
        let z = t.z(z_q.as_ref())?;
        let zc = covariates(&fit, &z).map_err(|e| invalid("z", e.to_string()))?;
        let inc = q.increment(d.increment.or(Some(DEFAULT_SET_INCREMENT))).map_err(to_store)?.unwrap_or(DEFAULT_SET_INCREMENT);
        let set = confidence_set_at_level(&fit, bounds, &zc, &target, inc, level).map_err(StoreError::Model)?;
        let quartiles = match cost_q.as_ref().or(d.cost.as_ref()) {
            Some(c) => set.cost_quartiles(c).map_err(|e| invalid("cost", e.to_string()))?,
            None => None,
        };
        Ok(json!({
            "trial_id": id,
            "theta": theta,
            "z": z,
            "level": level,
            "set_percentage": set.set_percentage(),
            "cost_quartiles": quartiles,
            "confidence_set": set,
        }))
    })?;
    reply(StatusCode::OK, body)
}

async fn bands(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult {
    let id = parse_id(&id)?;
    let q = Params::new(q, &["bounds", "z", "increment", "level"])?;
    let (bounds_q, z_q) = (q.bounds()?, q.list("z")?);
    let level = q.level()?;
    let body = store.with_trial(id, |t| {
        let fit = t.fit()?;
        let bounds = t.bounds(bounds_q.as_ref())?;
        let z = t.z(z_q.as_ref())?;
        let zc = covariates(&fit, &z).map_err(|e| invalid("z", e.to_string()))?;
        let inc = q
            .increment(t.meta.defaults.increment.or(Some(DEFAULT_SET_INCREMENT)))
            .map_err(to_store)?
            .unwrap_or(DEFAULT_SET_INCREMENT);
        let bands = confidence_bands_at_level(&fit, bounds, &zc, inc, level).map_err(StoreError::Model)?;
        Ok(json!({ "trial_id": id, "z": z, "level": level, "bands": bands }))
    })?;
    reply(StatusCode::OK, body)
}

fn invalid(field: &str, message: impl Into<String>) -> StoreError {
    StoreError::Invalid {
        field: field.to_owned(),
        message: message.into(),
    }
}

fn to_store(e: ApiError) -> StoreError {
    invalid(e.field.as_deref().unwrap_or("query"), e.message)
}
