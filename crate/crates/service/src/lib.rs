//! Read-only HTTP API over one precomputed dataset bundle.
//!
//! Arrays travel as little-endian f32 bodies with an `X-Shape: rows,cols`
//! header; small structural answers are JSON. Apart from the HD distances
//! to one point and the HD neighbor union of a selection, every response is
//! a cache read prepared at startup.

mod error;
mod state;

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};
use trace_core::metrics::{hd_distances_to_point, hd_neighbor_union};
use trace_core::model::MetricName;

pub use error::ApiError;
pub use state::ServiceState;

pub const X_SHAPE: &str = "x-shape";
pub const X_VMIN: &str = "x-vmin";
pub const X_VMAX: &str = "x-vmax";
/// Compact JSON of the served column's descriptor.
pub const X_METRIC: &str = "x-metric";

const PRECOMPUTE_HINT: &str = "run `trace precompute --data <dir>` to build the cache";

/// Body of `POST /api/selection/neighbors`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionQuery {
    pub indices: Vec<u64>,
    pub k: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub indices: Vec<u32>,
}

type Shared = Arc<ServiceState>;

pub fn router(state: Shared) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([X_SHAPE, X_VMIN, X_VMAX, X_METRIC].map(HeaderName::from_static));
    Router::new()
        .route("/api/manifest", get(manifest))
        .route("/api/embeddings/{name}/coords", get(coords))
        .route("/api/embeddings/{name}/metrics/{metric}", get(metric))
        .route("/api/selection/neighbors", post(selection_neighbors))
        .route("/api/points/{i}/hd_distances", get(hd_distances))
        .route("/api/metadata/{column}", get(metadata))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .layer(cors)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: Shared,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

fn array_response(body: Bytes, rows: usize, cols: usize) -> HeaderMap {
    let mut headers = HeaderMap::new();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/octet-stream"),
    );
    headers.insert(
        X_SHAPE,
        HeaderValue::from_str(&format!("{rows},{cols}")).expect("ascii"),
    );
    debug_assert_eq!(body.len(), rows * cols * 4);
    headers
}

async fn manifest(State(s): State<Shared>) -> Response {
    (
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/json"),
        )],
        s.manifest_body.clone(),
    )
        .into_response()
}

fn embedding_exists(s: &ServiceState, name: &str) -> Result<(), ApiError> {
    if s.coords.iter().any(|(n, _)| n == name) {
        Ok(())
    } else {
        Err(
            ApiError::not_found("unknown_embedding", format!("no embedding named {name:?}")).with(
                "available",
                json!(s.coords.iter().map(|(n, _)| n).collect::<Vec<_>>()),
            ),
        )
    }
}

async fn coords(State(s): State<Shared>, Path(name): Path<String>) -> Result<Response, ApiError> {
    embedding_exists(&s, &name)?;
    let body = s
        .coords
        .iter()
        .find(|(n, _)| *n == name)
        .expect("checked")
        .1
        .clone();
    Ok((array_response(body.clone(), s.n, 2), body).into_response())
}

/// Query values are compared with the textual form of the stored parameter.
fn param_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

const INTEGER_PARAMS: [&str; 5] = ["k", "seed", "anchors", "triplets_per_point", "embeddings"];

async fn metric(
    State(s): State<Shared>,
    Path((name, metric)): Path<(String, String)>,
    query: Result<Query<BTreeMap<String, String>>, QueryRejection>,
) -> Result<Response, ApiError> {
    embedding_exists(&s, &name)?;
    let metric_name = MetricName::parse(&metric).ok_or_else(|| {
        ApiError::not_found("unknown_metric", format!("no metric named {metric:?}")).with(
            "available",
            json!(MetricName::ALL
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()),
        )
    })?;
    let Query(query) = query.map_err(|e| ApiError::unprocessable("bad_params", e.body_text()))?;
    for key in INTEGER_PARAMS {
        if let Some(v) = query.get(key) {
            if v.parse::<u64>().is_err() {
                return Err(ApiError::unprocessable(
                    "bad_params",
                    format!("{key} must be a non-negative integer, got {v:?}"),
                ));
            }
        }
    }

    let candidates: Vec<_> = s
        .columns
        .iter()
        .filter(|c| c.descriptor.metric_name == metric_name)
        .filter(|c| c.embedding.is_none() || c.embedding.as_deref() == Some(name.as_str()))
        .collect();
    if candidates.is_empty() {
        return Err(ApiError::not_found(
            "not_precomputed",
            format!("no {metric} column for embedding {name:?}"),
        )
        .with("hint", json!(PRECOMPUTE_HINT)));
    }
    if let Some(key) = query.keys().find(|k| {
        !candidates
            .iter()
            .any(|c| c.descriptor.params.contains_key(k.as_str()))
    }) {
        return Err(ApiError::unprocessable(
            "bad_params",
            format!("{metric} has no parameter {key:?}"),
        ));
    }
    let available = json!(candidates
        .iter()
        .map(|c| &c.descriptor.params)
        .collect::<Vec<_>>());
    let mut available_k: Vec<u64> = candidates
        .iter()
        .filter_map(|c| c.descriptor.params.get("k").and_then(Value::as_u64))
        .collect();
    available_k.sort_unstable();
    available_k.dedup();
    let matches: Vec<_> = candidates
        .iter()
        .filter(|c| {
            query.iter().all(|(k, v)| {
                c.descriptor.params.get(k).map(param_text).as_deref() == Some(v.as_str())
            })
        })
        .collect();
    let column = match matches.as_slice() {
        [one] => one,
        [] => {
            return Err(ApiError::not_found(
                "no_matching_column",
                format!("no {metric} column matches {query:?}"),
            )
            .with("available", available)
            .with("available_k", json!(available_k)))
        }
        _ => {
            return Err(ApiError::unprocessable(
                "ambiguous_params",
                format!("{} {metric} columns match; narrow the query", matches.len()),
            )
            .with("available", available)
            .with("available_k", json!(available_k)))
        }
    };

    let mut headers = array_response(column.body.clone(), s.n, 1);
    let d = &column.descriptor;
    let text = |v: String| HeaderValue::from_str(&v).expect("header text");
    headers.insert(X_VMIN, text(d.vmin.to_string()));
    headers.insert(X_VMAX, text(d.vmax.to_string()));
    headers.insert(
        X_METRIC,
        text(serde_json::to_string(d).expect("descriptor serializes")),
    );
    Ok((headers, column.body.clone()).into_response())
}

async fn selection_neighbors(
    State(s): State<Shared>,
    body: Bytes,
) -> Result<Json<SelectionResult>, ApiError> {
    let q: SelectionQuery = serde_json::from_slice(&body).map_err(|e| {
        if e.is_data() {
            ApiError::unprocessable("bad_selection", e.to_string())
        } else {
            ApiError::bad_request("bad_json", e.to_string())
        }
    })?;
    if q.indices.is_empty() {
        return Err(ApiError::unprocessable(
            "bad_selection",
            "selection is empty",
        ));
    }
    let mut sorted = q.indices.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ApiError::unprocessable(
            "bad_selection",
            "selection indices must be unique",
        ));
    }
    if let Some(&bad) = sorted.iter().find(|&&i| i >= s.n as u64) {
        return Err(ApiError::unprocessable(
            "bad_selection",
            format!("index {bad} out of range for n = {}", s.n),
        ));
    }
    let graph = s.hd_graph.as_ref().ok_or_else(|| {
        ApiError::not_found("not_precomputed", "no HD neighbor graph in the cache")
            .with("hint", json!(PRECOMPUTE_HINT))
    })?;
    if q.k == 0 || q.k > graph.k() as u64 {
        return Err(ApiError::unprocessable(
            "bad_selection",
            format!("k must be in 1..={}, got {}", graph.k(), q.k),
        )
        .with("kmax", json!(graph.k())));
    }
    let indices: Vec<u32> = q.indices.iter().map(|&i| i as u32).collect();
    let union = hd_neighbor_union(&indices, graph, q.k as usize).map_err(ApiError::from_core)?;
    Ok(Json(SelectionResult { indices: union }))
}

async fn hd_distances(
    State(s): State<Shared>,
    Path(i): Path<String>,
) -> Result<Response, ApiError> {
    let out_of_range =
        || ApiError::not_found("unknown_point", format!("no point {i:?} (n = {})", s.n));
    let idx = i.parse::<usize>().map_err(|_| out_of_range())?;
    if idx >= s.n {
        return Err(out_of_range());
    }
    let state = s.clone();
    let values = tokio::task::spawn_blocking(move || hd_distances_to_point(&state.hd_points, idx))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from_core)?;
    let body = Bytes::from(
        values
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect::<Vec<u8>>(),
    );
    Ok((array_response(body.clone(), s.n, 1), body).into_response())
}

async fn metadata(
    State(s): State<Shared>,
    Path(column): Path<String>,
) -> Result<Response, ApiError> {
    match s.metadata.get(&column) {
        Some(state::MetadataBody::Categorical(body)) => Ok((
            [(
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/json"),
            )],
            body.clone(),
        )
            .into_response()),
        Some(state::MetadataBody::Continuous(body)) => {
            Ok((array_response(body.clone(), s.n, 1), body.clone()).into_response())
        }
        None => Err(ApiError::not_found(
            "unknown_column",
            format!("no metadata column {column:?}"),
        )
        .with("available", json!(s.metadata.keys().collect::<Vec<_>>()))),
    }
}
