//! Stateless HTTP API. Request and response bodies reuse the file
//! documents; PNG payloads travel base64-encoded inside JSON.

use std::path::Path;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use reflow_core::difficulty_map::{preset_map, Preset};
use reflow_core::io::{self, IoError};
use reflow_core::optimizer::{StopReason, TraceRecord};
use reflow_core::pipeline::{
    self, ConstraintSource, Estimator, FailureClass, FitOptions, PipelineError, RefineOptions, DEFAULT_SEED,
};
use reflow_core::scoring::{ScoringConfig, DEFAULT_MC_SAMPLES};
use reflow_core::{CalibrationSession, ConstraintSet, DifficultyMap, Layout, OptimizerConfig, RegionMapping};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use tower_http::services::ServeDir;

use crate::cli::{parse_policy, CliError};

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(reason: &'static str, message: impl ToString) -> Self {
        Self { status: StatusCode::BAD_REQUEST, reason, message: message.to_string() }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e.class() {
            FailureClass::Input => StatusCode::BAD_REQUEST,
            FailureClass::Fit | FailureClass::Optimizer => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self { status, reason: e.reason(), message: e.to_string() }
    }
}

impl From<IoError> for ApiError {
    fn from(e: IoError) -> Self {
        PipelineError::Io(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.reason, "message": self.message });
        (self.status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn parse_body<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_body", e))
}

pub fn router(static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/presets", get(presets))
        .route("/api/calibration/fit", post(fit))
        .route("/api/score", post(score))
        .route("/api/refine", post(refine))
        .route("/api/render", post(render))
        .layer(DefaultBodyLimit::max(BODY_LIMIT));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn serve(host: &str, port: u16, static_dir: Option<&Path>) -> Result<(), CliError> {
    let app = router(static_dir);
    let addr = format!("{host}:{port}");
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Server(format!("{addr}: {e}")))?;
        println!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Server(e.to_string()))
    })
}

async fn blocking<F>(f: F) -> ApiResult
where
    F: FnOnce() -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, reason: "internal", message: e.to_string() })
    })
}

async fn presets() -> Response {
    let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
    json_response(serde_json::json!({ "presets": names }).to_string())
}

#[derive(Debug, Deserialize)]
struct FitQuery {
    t_n: Option<f64>,
    r_i_policy: Option<String>,
    degree: Option<usize>,
}

async fn fit(Query(q): Query<FitQuery>, body: Bytes) -> ApiResult {
    blocking(move || {
        let mut opts = FitOptions::default();
        if let Some(t) = q.t_n {
            opts.t_n = t;
        }
        if let Some(p) = &q.r_i_policy {
            opts.r_i_policy = parse_policy(p).map_err(|e| ApiError::bad_request("invalid_parameter", e))?;
        }
        if let Some(d) = q.degree {
            opts.degree = d;
        }
        let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request("malformed_body", e))?;
        let session: CalibrationSession = io::from_json(text)?;
        let out = pipeline::fit_session(&session, &opts)?;
        Ok(json_response(io::to_json(&out.map)))
    })
    .await
}

fn load_layout(raw: &RawValue) -> Result<Layout, ApiError> {
    let layout: Layout = io::from_json(raw.get())?;
    layout.validate().map_err(PipelineError::Layout)?;
    Ok(layout)
}

fn load_map(map: Option<&RawValue>, preset: Option<&str>, layout: &Layout) -> Result<DifficultyMap, ApiError> {
    match (map, preset) {
        (Some(raw), None) => {
            let m: DifficultyMap = io::from_json(raw.get())?;
            m.validate().map_err(PipelineError::Map)?;
            Ok(m)
        }
        (None, Some(name)) => Ok(preset_map(name, layout.screen).map_err(PipelineError::Map)?),
        _ => Err(ApiError::bad_request("map_required", "give exactly one of `map` or `preset`")),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    layout: Box<RawValue>,
    map: Option<Box<RawValue>>,
    preset: Option<String>,
    estimator: Option<Estimator>,
    n: Option<usize>,
    seed: Option<u64>,
}

async fn score(body: Bytes) -> ApiResult {
    blocking(move || {
        let req: ScoreRequest = parse_body(&body)?;
        let layout = load_layout(&req.layout)?;
        let map = load_map(req.map.as_deref(), req.preset.as_deref(), &layout)?;
        let report = pipeline::score_layout(
            &layout,
            &map,
            req.estimator.unwrap_or(Estimator::ClosedForm),
            req.n.unwrap_or(DEFAULT_MC_SAMPLES),
            req.seed.unwrap_or(DEFAULT_SEED),
            &ScoringConfig::default(),
        )?;
        Ok(json_response(io::to_json(&report)))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineRequest {
    layout: Box<RawValue>,
    map: Option<Box<RawValue>>,
    preset: Option<String>,
    /// Field overrides on the default optimizer configuration.
    config: Option<serde_json::Map<String, serde_json::Value>>,
    /// `false` disables constraints.
    constraints: Option<bool>,
    constraint_set: Option<Box<RawValue>>,
    align_tol: Option<f64>,
}

#[derive(Serialize)]
struct RefineResponse<'a> {
    refined: &'a RawValue,
    mapping: &'a RawValue,
    constraints: &'a RawValue,
    trace: &'a [TraceRecord<f64>],
    stop_reason: StopReason,
    initial_score: f64,
    final_score: f64,
    config: OptimizerConfig,
}

fn optimizer_config(overrides: Option<serde_json::Map<String, serde_json::Value>>) -> Result<OptimizerConfig, ApiError> {
    let Some(overrides) = overrides else { return Ok(OptimizerConfig::default()) };
    let mut base = serde_json::to_value(OptimizerConfig::default()).expect("config serializes");
    let obj = base.as_object_mut().expect("config is an object");
    for (k, v) in overrides {
        if !obj.contains_key(&k) {
            return Err(ApiError::bad_request("invalid_config", format!("unknown config field '{k}'")));
        }
        obj.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| ApiError::bad_request("invalid_config", e))
}

fn raw(text: &str) -> Box<RawValue> {
    RawValue::from_string(text.trim_end().to_string()).expect("artifact is valid JSON")
}

async fn refine(body: Bytes) -> ApiResult {
    blocking(move || {
        let req: RefineRequest = parse_body(&body)?;
        let layout = load_layout(&req.layout)?;
        let map = load_map(req.map.as_deref(), req.preset.as_deref(), &layout)?;
        let cfg = optimizer_config(req.config)?;
        let constraints = match (req.constraints, req.constraint_set) {
            (Some(false), _) => ConstraintSource::None,
            (_, Some(set)) => ConstraintSource::Given(io::from_json::<ConstraintSet>(set.get())?),
            _ => ConstraintSource::Extract {
                tolerance: req.align_tol.unwrap_or(reflow_core::constraints::DEFAULT_ALIGN_TOLERANCE),
            },
        };
        let out = pipeline::refine_layout(&layout, &map, &RefineOptions { constraints, optimizer: cfg })?;
        let art = out.artifacts(&cfg);
        let (refined, mapping, constraints) = (raw(&art.refined_layout), raw(&art.mapping), raw(&art.constraints));
        let resp = RefineResponse {
            refined: &refined,
            mapping: &mapping,
            constraints: &constraints,
            trace: &out.result.trace,
            stop_reason: out.result.stop_reason,
            initial_score: out.initial_score,
            final_score: out.final_score,
            config: cfg,
        };
        Ok(json_response(serde_json::to_string(&resp).expect("response serializes")))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderRequest {
    /// Base64 PNG screenshot.
    png: String,
    mapping: Box<RawValue>,
    /// Original layout; sets the pixel scale and supplies element text.
    layout: Option<Box<RawValue>>,
    scale: Option<f64>,
    side_by_side: Option<bool>,
}

async fn render(body: Bytes) -> ApiResult {
    blocking(move || {
        let req: RenderRequest = parse_body(&body)?;
        let png = BASE64.decode(req.png.as_bytes()).map_err(|e| ApiError::bad_request("invalid_base64", e))?;
        let mapping: RegionMapping = io::from_json(req.mapping.get())?;
        let layout = req.layout.as_deref().map(load_layout).transpose()?;
        let scale = match (req.scale, &layout) {
            (Some(s), _) => s,
            (None, Some(l)) => {
                let r = reflow_core::raster::Raster::decode_png(&png, 1.0).map_err(PipelineError::Raster)?;
                pipeline::raster_scale(r.width, l)
            }
            (None, None) => 1.0,
        };
        let out = pipeline::render_png(&png, scale, &mapping, layout.as_ref(), req.side_by_side.unwrap_or(false))?;
        Ok(json_response(serde_json::json!({ "png": BASE64.encode(out) }).to_string()))
    })
    .await
}
