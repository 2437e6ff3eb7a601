//! HTTP front end: TAP sync queries, VOSI metadata, data files, online
//! processing and provenance export.

pub mod params;
pub mod vosi;

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, RawQuery, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use gammagate_core::gateway::{Gateway, GatewayError};
use gammagate_core::provenance::{serialize_provjson, serialize_provn, ProvError};
use gammagate_core::votable::{error_votable, write_csv, write_votable, CSV_CONTENT_TYPE, VOTABLE_CONTENT_TYPE};

pub use params::{parse_params, Format, ParamError, TapRequest};
pub use vosi::{registry_record, RegistryError};

const XML: &str = "text/xml";

/// Runs one sync request against the current catalog snapshot. Every
/// failure becomes a QUERY_STATUS=ERROR VOTable, whatever FORMAT asked for.
pub fn handle_sync(gw: &Gateway, pairs: &[(String, String)]) -> (&'static str, Vec<u8>) {
    let req = match parse_params(pairs) {
        Ok(r) => r,
        Err(e) => return (VOTABLE_CONTENT_TYPE, error_votable(&e.to_string())),
    };
    match gw.query(&req.query, Some(req.maxrec)) {
        Ok(r) => match req.format {
            Format::VoTable => (VOTABLE_CONTENT_TYPE, write_votable(&r.columns, &r.rows, r.overflow)),
            Format::Csv => (CSV_CONTENT_TYPE, write_csv(&r.columns, &r.rows)),
        },
        Err(e) => (VOTABLE_CONTENT_TYPE, error_votable(&e.to_string())),
    }
}

fn body(content_type: &'static str, bytes: Vec<u8>) -> Response {
    ([(CONTENT_TYPE, content_type)], bytes).into_response()
}

fn error_json(status: StatusCode, kind: &str, message: impl ToString) -> Response {
    (status, Json(json!({ "error": kind, "message": message.to_string() }))).into_response()
}

type Shared = Arc<Gateway>;

async fn sync(State(gw): State<Shared>, RawQuery(query): RawQuery, body_bytes: Bytes) -> Response {
    let pairs = params::collect_pairs(query.as_deref(), &body_bytes);
    match tokio::task::spawn_blocking(move || handle_sync(&gw, &pairs)).await {
        Ok((ct, bytes)) => body(ct, bytes),
        Err(e) => body(VOTABLE_CONTENT_TYPE, error_votable(&format!("internal error: {e}"))),
    }
}

async fn async_unsupported() -> Response {
    (
        StatusCode::NOT_IMPLEMENTED,
        [(CONTENT_TYPE, VOTABLE_CONTENT_TYPE)],
        error_votable("asynchronous (UWS) queries are not supported; use /sync"),
    )
        .into_response()
}

async fn availability() -> Response {
    body(XML, vosi::availability())
}

async fn capabilities(State(gw): State<Shared>) -> Response {
    body(XML, vosi::capabilities(&gw.config().base_url))
}

async fn tables() -> Response {
    body(XML, vosi::tables())
}

async fn registry(State(gw): State<Shared>) -> Response {
    let c = gw.config();
    match registry_record(&c.authority, &c.title, &c.base_url) {
        Ok(xml) => body(XML, xml),
        Err(e) => error_json(StatusCode::INTERNAL_SERVER_ERROR, "InvalidConfig", e),
    }
}

async fn data(State(gw): State<Shared>, Path(file): Path<String>) -> Response {
    let Some(path) = file.strip_suffix(".fits").and_then(|id| gw.data_file(id)) else {
        return not_found().await;
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => body("application/fits", bytes),
        Err(_) => not_found().await,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    activity: String,
    #[serde(default)]
    params: BTreeMap<String, serde_json::Value>,
    inputs: Vec<String>,
    agent: Option<String>,
}

fn kind_of(e: &GatewayError) -> (StatusCode, &'static str) {
    use gammagate_core::processing::ProcessingError as P;
    match e {
        GatewayError::Processing(p) => match p {
            P::UnknownActivity(_) => (StatusCode::NOT_FOUND, "UnknownActivity"),
            P::UnknownEntity(_) => (StatusCode::NOT_FOUND, "UnknownEntity"),
            P::InvalidRadius(_) => (StatusCode::BAD_REQUEST, "InvalidRadius"),
            P::InvalidCenter(_) => (StatusCode::BAD_REQUEST, "InvalidCenter"),
            P::InvalidRange { .. } => (StatusCode::BAD_REQUEST, "InvalidRange"),
            P::BadEdges(_) => (StatusCode::BAD_REQUEST, "BadEdges"),
            P::NoInputs(_) => (StatusCode::BAD_REQUEST, "NoInputs"),
            P::Prov(ProvError::ParamType { .. }) => (StatusCode::BAD_REQUEST, "ParamTypeError"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "ProcessingFailed"),
        },
        GatewayError::Invalid(_) => (StatusCode::BAD_REQUEST, "InvalidRequest"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "InternalError"),
    }
}

#[allow(clippy::result_large_err)]
fn param_text(name: &str, v: serde_json::Value) -> Result<String, Response> {
    match v {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Array(items) if items.iter().all(|i| i.is_number()) => {
            Ok(items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
        }
        other => Err(error_json(
            StatusCode::BAD_REQUEST,
            "ParamTypeError",
            format!("parameter {name}: expected a string or number, got {other}"),
        )),
    }
}

async fn run(State(gw): State<Shared>, body_bytes: Bytes) -> Response {
    let req: RunRequest = match serde_json::from_slice(&body_bytes) {
        Ok(r) => r,
        Err(e) => return error_json(StatusCode::BAD_REQUEST, "MalformedRequest", e),
    };
    let mut params = BTreeMap::new();
    for (k, v) in req.params {
        match param_text(&k, v) {
            Ok(s) => params.insert(k, s),
            Err(resp) => return resp,
        };
    }
    let outcome = tokio::task::spawn_blocking(move || {
        gw.run(&req.activity, params, &req.inputs, req.agent.as_deref())
    })
    .await;
    match outcome {
        Ok(Ok(o)) => Json(json!({ "activity_id": o.activity_id, "outputs": o.outputs })).into_response(),
        Ok(Err(e)) => {
            let (status, kind) = kind_of(&e);
            error_json(status, kind, e)
        }
        Err(e) => error_json(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", e),
    }
}

async fn provenance(
    State(gw): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let depth = match q.get("depth").map(|d| d.parse::<usize>()) {
        None => None,
        Some(Ok(d)) if d > 0 => Some(d),
        Some(_) => return error_json(StatusCode::BAD_REQUEST, "InvalidRequest", "depth must be a positive integer"),
    };
    let graph = match gw.with_store(|g| g.ancestry(&id, depth)) {
        Ok(g) => g,
        Err(e) => return error_json(StatusCode::NOT_FOUND, "UnknownEntity", e),
    };
    match q.get("format").map(String::as_str).unwrap_or("provjson") {
        "provn" => body("text/provenance-notation", serialize_provn(&graph).into_bytes()),
        "provjson" | "json" => body("application/json", serialize_provjson(&graph)),
        other => error_json(StatusCode::BAD_REQUEST, "InvalidRequest", format!("unknown format {other}")),
    }
}

async fn not_found() -> Response {
    (StatusCode::NOT_FOUND, "not found\n").into_response()
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let started = Instant::now();
    let resp = next.run(req).await;
    log::info!(
        "{method} {path} {} {:.1}ms",
        resp.status().as_u16(),
        started.elapsed().as_secs_f64() * 1e3
    );
    resp
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/sync", get(sync).post(sync))
        .route("/async", any(async_unsupported))
        .route("/async/{*rest}", any(async_unsupported))
        .route("/availability", get(availability))
        .route("/capabilities", get(capabilities))
        .route("/tables", get(tables))
        .route("/registry", get(registry))
        .route("/data/{file}", get(data))
        .route("/run", post(run))
        .route("/provenance/{id}", get(provenance))
        .fallback(not_found)
        .layer(middleware::from_fn(log_requests))
        .with_state(gw)
}

/// Serves until `shutdown` resolves; in-flight requests are allowed to finish.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gw: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gw)).with_graceful_shutdown(shutdown).await
}
