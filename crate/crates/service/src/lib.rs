//! HTTP service: scenarios, asynchronous runs, live data previews and
//! actuator sizing estimates.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use greenhouse_core::actuators::power;
use greenhouse_core::external_data::{interpolate_carbon, DataSource, FixtureStore, Window};
use greenhouse_core::report::{execute, Controller};
use greenhouse_core::scenario::{ActuatorOverrides, EconomicOverrides, GeometryConfig};
use greenhouse_core::simulator::RunOptions;
use greenhouse_core::{ActuatorKind, Error, ScenarioConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub mod store;

use store::{RunStatus, RunStore, StoreError};

/// Media type of every JSON response.
pub const MEDIA_TYPE: &str = "application/vnd.greenhouse.v1+json";

pub struct Settings {
    /// Fixture store consulted before any download.
    pub fixtures: PathBuf,
    /// Base for relative fixture paths inside scenario documents.
    pub data_root: PathBuf,
    pub offline: bool,
}

pub struct AppState {
    pub store: RunStore,
    pub settings: Settings,
}

impl AppState {
    fn source(&self) -> DataSource {
        let store = FixtureStore::new(&self.settings.fixtures);
        if self.settings.offline {
            DataSource::offline(store)
        } else {
            DataSource::from_env(store)
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/scenarios", post(create_scenario).get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario).delete(delete_scenario))
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/result", get(get_result))
        .route("/live", get(live))
        .route("/estimate", post(estimate))
        .layer(axum::middleware::map_response(versioned))
        .with_state(state)
}

async fn versioned(mut res: Response) -> Response {
    let json = res
        .headers()
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"application/json"));
    if json {
        res.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static(MEDIA_TYPE));
    }
    res
}

/// Error body: `{"error": message, "field"?: name, "source"?: origin}`.
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.body[key] = json!(value.into());
        self
    }

    fn invalid(e: Error) -> Self {
        match e {
            Error::Validation { field, reason } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid `{field}`: {reason}")).with("field", field)
            }
            e => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        }
    }

    fn upstream(e: Error, source: &str) -> Self {
        let status = match e {
            Error::CoverageGap(_) | Error::UnsupportedZone(_) | Error::Offline(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_GATEWAY,
        };
        Self::new(status, e.to_string()).with("source", source)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(..) => StatusCode::NOT_FOUND,
            StoreError::Transition { .. } => StatusCode::CONFLICT,
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, or TOML when the content type says so.
fn parse_body<T: serde::de::DeserializeOwned>(headers: &HeaderMap, body: &Bytes) -> ApiResult<T> {
    let toml = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("toml"));
    let text = std::str::from_utf8(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    if toml {
        toml::from_str(text).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.message().to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
    }
}

async fn create_scenario(State(s): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let config: ScenarioConfig = parse_body(&headers, &body)?;
    config.validate().map_err(ApiError::invalid)?;
    let (id, new) = s.store.put_scenario(config)?;
    let status = if new { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "scenario_id": id }))).into_response())
}

async fn list_scenarios(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let items: Vec<_> = s
        .store
        .scenarios()
        .into_iter()
        .map(|(id, name)| json!({ "scenario_id": id, "name": name }))
        .collect();
    Json(json!({ "scenarios": items }))
}

async fn get_scenario(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ScenarioConfig>> {
    Ok(Json(s.store.scenario(&id)?))
}

async fn delete_scenario(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    s.store.delete_scenario(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ControllerName {
    None,
    Nempc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    scenario_id: String,
    controller: ControllerName,
    /// Defaults to the scenario's setting.
    #[serde(default)]
    include_social_cost: Option<bool>,
    /// Charge optimiser wall time to the ledger.
    #[serde(default = "yes")]
    charge_solver: bool,
}

fn yes() -> bool {
    true
}

async fn create_run(State(s): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let req: RunRequest = parse_body(&headers, &body)?;
    let config = s.store.scenario(&req.scenario_id)?;
    let controller = match req.controller {
        ControllerName::None => Controller::None,
        ControllerName::Nempc => Controller::Nempc {
            include_social_cost: req.include_social_cost.unwrap_or(config.control.include_social_cost),
        },
    };
    let record = s.store.create_run(&req.scenario_id, controller, req.charge_solver)?;
    let id = record.run_id.clone();
    let state = s.clone();
    tokio::task::spawn_blocking(move || work(&state, &id));
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": record.run_id }))).into_response())
}

fn work(s: &AppState, id: &str) {
    let outcome = (|| -> Result<(), String> {
        let record = s.store.run(id).map_err(|e| e.to_string())?;
        s.store.start(id).map_err(|e| e.to_string())?;
        let prep = record
            .config
            .prepare(&s.settings.data_root, &s.source())
            .map_err(|e| e.to_string())?;
        let opts = RunOptions {
            charge_solver: record.charge_solver,
            ..RunOptions::default()
        };
        let doc = execute(&prep, record.controller, &opts, &mut |k, n| {
            s.store.set_progress(id, k as f64 / n.max(1) as f64)
        })
        .map_err(|e| e.to_string())?;
        s.store.finish(id, &doc).map_err(|e| e.to_string())
    })();
    if let Err(e) = outcome {
        tracing::warn!(run = id, error = %e, "run failed");
        if let Err(e) = s.store.fail(id, e) {
            tracing::error!(run = id, error = %e, "cannot record failure");
        }
    }
}

async fn list_runs(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "runs": s.store.runs() }))
}

async fn get_run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<store::RunRecord>> {
    Ok(Json(s.store.run(&id)?))
}

async fn get_result(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = s.store.run(&id)?;
    match record.status {
        RunStatus::Done => {
            let text = s.store.result(&record)?;
            Ok(([(header::CONTENT_TYPE, MEDIA_TYPE)], text).into_response())
        }
        RunStatus::Failed => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("run failed: {}", record.error.unwrap_or_default()),
        )
        .with("status", "failed")),
        st => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("run is {st:?}, result not available yet").to_lowercase(),
        )),
    }
}

#[derive(Debug, Deserialize)]
pub struct LiveQuery {
    lat: f64,
    lon: f64,
    zone: String,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
}

#[derive(Debug, Serialize)]
pub struct LivePoint {
    pub time: DateTime<Utc>,
    pub t_ext_k: f64,
    pub h_rel_pct: f64,
    pub v_wind_m_s: f64,
    pub ghi_w_m2: f64,
    pub dni_w_m2: f64,
    pub dhi_w_m2: f64,
    pub carbon_intensity_g_kwh: f64,
}

async fn live(State(s): State<Arc<AppState>>, Query(q): Query<LiveQuery>) -> ApiResult<Json<serde_json::Value>> {
    let window = Window::new(q.start, q.end).map_err(ApiError::invalid)?;
    let state = s.clone();
    let zone = q.zone.clone();
    let fetched = tokio::task::spawn_blocking(move || {
        let src = state.source();
        let w = src
            .fetch_weather(q.lat, q.lon, &window)
            .map_err(|e| ApiError::upstream(e, "weather"))?;
        let c = src
            .fetch_carbon(&zone, &window)
            .map_err(|e| ApiError::upstream(e, "carbon-intensity"))?;
        Ok::<_, ApiError>((w, c))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let (weather, carbon) = fetched;
    let mut points = Vec::with_capacity(weather.len());
    for w in &weather {
        points.push(LivePoint {
            time: w.time,
            t_ext_k: w.t_ext,
            h_rel_pct: w.h_rel,
            v_wind_m_s: w.v_wind,
            ghi_w_m2: w.ghi,
            dni_w_m2: w.dni,
            dhi_w_m2: w.dhi,
            carbon_intensity_g_kwh: interpolate_carbon(&carbon, w.time)
                .map_err(|e| ApiError::upstream(e, "carbon-intensity"))?,
        });
    }
    Ok(Json(
        json!({ "zone": q.zone, "latitude": q.lat, "longitude": q.lon, "points": points }),
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateRequest {
    greenhouse: GeometryConfig,
    actuators: ActuatorOverrides,
    economics: EconomicOverrides,
}

async fn estimate(headers: HeaderMap, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: EstimateRequest = parse_body(&headers, &body)?;
    let mut c = ScenarioConfig::new(0.0, 0.0);
    c.greenhouse = req.greenhouse;
    c.actuators = req.actuators;
    c.economics = req.economics;
    let model = c.model().map_err(ApiError::invalid)?;
    let price = model.params.economics.energy_price;
    let actuators: Vec<_> = ActuatorKind::ALL
        .iter()
        .map(|&k| {
            let a = model.actuators.get(k);
            let p = power(100.0, a).unwrap_or(f64::NAN);
            json!({
                "kind": k,
                "label": k.label(),
                "a_max": a.a_max,
                "unit": k.unit(),
                "p_unit": a.p_unit,
                "eta": a.eta,
                "power_w": p,
                "cost_eur_per_hour": price * p / 1000.0,
            })
        })
        .collect();
    let g = &model.geometry;
    Ok(Json(json!({
        "volume_m3": g.volume,
        "footprint_m2": g.footprint,
        "cultivated_area_m2": g.cultivated_area,
        "cover_area_m2": g.cover_area(),
        "actuators": actuators,
    })))
}
