use std::path::Path;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trace_core::loader::Dataset;
use trace_core::pipeline::{precompute, PrecomputeConfig};
use trace_core::synth::write_line4_fixture;
use trace_service::{router, ServiceState};

struct Fixture {
    dir: tempfile::TempDir,
    app: axum::Router,
}

fn line4(precomputed: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    write_line4_fixture(dir.path()).unwrap();
    if precomputed {
        let ds = Dataset::open(dir.path()).unwrap();
        let cfg = PrecomputeConfig {
            k_list: vec![1],
            ..PrecomputeConfig::default()
        };
        precompute(&ds, &cfg).unwrap();
    }
    let state = ServiceState::load(dir.path()).unwrap();
    Fixture {
        app: router(Arc::new(state)),
        dir,
    }
}

async fn send(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, HeaderMap, Bytes) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, headers, bytes)
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, HeaderMap, Bytes) {
    send(app, Method::GET, uri, None).await
}

fn floats(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn json_of(b: &[u8]) -> Value {
    serde_json::from_slice(b).unwrap()
}

fn cache_file(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap()
}

#[tokio::test]
async fn manifest_lists_embeddings_and_metrics() {
    let f = line4(true);
    let (status, _, body) = get(&f.app, "/api/manifest").await;
    assert_eq!(status, StatusCode::OK);
    let m = json_of(&body);
    assert_eq!(m["n"], 4);
    assert_eq!(m["dataset"], "line4");
    assert_eq!(m["embeddings"], json!(["identity", "scrambled"]));
    assert_eq!(m["metrics"]["scrambled"].as_array().unwrap().len(), 3);
    assert_eq!(m["bundle_metrics"][0]["metric_name"], "point_stability");
    assert_eq!(
        m["metadata"],
        json!([{"name": "side", "kind": "categorical"}, {"name": "x", "kind": "continuous"}])
    );
    assert_eq!(m["kmax"], 3);
    let (_, _, again) = get(&f.app, "/api/manifest").await;
    assert_eq!(body, again);
}

#[tokio::test]
async fn manifest_without_cache_has_empty_metric_lists() {
    let f = line4(false);
    let (status, _, body) = get(&f.app, "/api/manifest").await;
    assert_eq!(status, StatusCode::OK);
    let m = json_of(&body);
    assert_eq!(m["metrics"]["identity"], json!([]));
    assert_eq!(m["bundle_metrics"], json!([]));
    assert_eq!(m["kmax"], Value::Null);
}

#[tokio::test]
async fn coords_are_the_stored_file() {
    let f = line4(true);
    let (status, headers, body) = get(&f.app, "/api/embeddings/scrambled/coords").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.len(), 32);
    assert_eq!(headers["x-shape"], "4,2");
    assert_eq!(
        body.as_ref(),
        cache_file(f.dir.path(), "data/embeddings/scrambled.bin")
    );
    assert_eq!(floats(&body), vec![0.0, 0.0, 10.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
    let (status, _, _) = get(&f.app, "/api/embeddings/nope/coords").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn preservation_k1_is_verbatim() {
    let f = line4(true);
    let (status, headers, body) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation?k=1",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(floats(&body), vec![0.0, 0.0, 0.0, 1.0]);
    assert_eq!(
        body.as_ref(),
        cache_file(
            f.dir.path(),
            "cache/metrics/scrambled/neighborhood_preservation.k1.bin"
        )
    );
    assert_eq!(headers["x-shape"], "4,1");
    assert_eq!(headers["x-vmin"], "0");
    assert_eq!(headers["x-vmax"], "1");
    let desc: Value = serde_json::from_str(headers["x-metric"].to_str().unwrap()).unwrap();
    assert_eq!(desc["params"]["k"], 1);

    // the only preservation column needs no query
    let (status, _, plain) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(plain, body);
}

#[tokio::test]
async fn metric_errors() {
    let f = line4(true);
    let (status, _, body) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation?k=2",
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json_of(&body)["available_k"], json!([1]));
    let (status, _, _) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation?k=abc",
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation?colour=red",
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _, _) = get(&f.app, "/api/embeddings/scrambled/metrics/bogus").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = get(&f.app, "/api/embeddings/bogus/metrics/triplet_accuracy").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn other_metrics_and_stability() {
    let f = line4(true);
    let (status, _, body) = get(&f.app, "/api/embeddings/scrambled/metrics/triplet_accuracy").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        floats(&body),
        vec![(1.0f64 / 3.0) as f32, 0.0, 0.0, (2.0f64 / 3.0) as f32]
    );
    let (status, _, body) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/distance_rank_correlation",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!((floats(&body)[3] - 0.5).abs() < 1e-6);
    let (status, _, a) = get(
        &f.app,
        "/api/embeddings/identity/metrics/point_stability?k=3",
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, _, b) = get(&f.app, "/api/embeddings/scrambled/metrics/point_stability").await;
    assert_eq!(a, b);
    assert_eq!(
        a.as_ref(),
        cache_file(f.dir.path(), "cache/metrics/_bundle/point_stability.k3.bin")
    );
}

#[tokio::test]
async fn missing_cache_gives_hint() {
    let f = line4(false);
    let (status, _, body) = get(
        &f.app,
        "/api/embeddings/scrambled/metrics/neighborhood_preservation?k=1",
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(json_of(&body)["hint"]
        .as_str()
        .unwrap()
        .contains("precompute"));
    let (status, _, _) = send(
        &f.app,
        Method::POST,
        "/api/selection/neighbors",
        Some(json!({"indices": [0], "k": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stability_absent_for_single_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = write_line4_fixture(dir.path()).unwrap();
    manifest.embeddings.truncate(1);
    manifest.save(dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    precompute(
        &ds,
        &PrecomputeConfig {
            k_list: vec![1],
            ..PrecomputeConfig::default()
        },
    )
    .unwrap();
    let app = router(Arc::new(ServiceState::load(dir.path()).unwrap()));
    let (status, _, _) = get(&app, "/api/embeddings/identity/metrics/point_stability").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn selection_neighbors() {
    let f = line4(true);
    let post = |v: Value| send(&f.app, Method::POST, "/api/selection/neighbors", Some(v));
    let (status, _, body) = post(json!({"indices": [0], "k": 1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body), json!({"indices": [1]}));
    let (_, _, body) = post(json!({"indices": [0, 2], "k": 1})).await;
    assert_eq!(json_of(&body), json!({"indices": [1]}));
    let (_, _, body) = post(json!({"indices": [3], "k": 2})).await;
    assert_eq!(json_of(&body), json!({"indices": [1, 2]}));
    for bad in [
        json!({"indices": [], "k": 1}),
        json!({"indices": [0, 0], "k": 1}),
        json!({"indices": [4], "k": 1}),
        json!({"indices": [0], "k": 0}),
        json!({"indices": [0], "k": 4}),
        json!({"indices": [-1], "k": 1}),
        json!({"k": 1}),
    ] {
        let (status, _, _) = post(bad.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
    }
}

#[tokio::test]
async fn hd_distances() {
    let f = line4(false);
    let (status, headers, body) = get(&f.app, "/api/points/3/hd_distances").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["x-shape"], "4,1");
    assert_eq!(floats(&body), vec![10.0, 9.0, 8.0, 0.0]);
    let (_, _, body) = get(&f.app, "/api/points/0/hd_distances").await;
    assert_eq!(floats(&body)[0], 0.0);
    for bad in ["4", "99", "-1", "x"] {
        let (status, _, _) = get(&f.app, &format!("/api/points/{bad}/hd_distances")).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{bad}");
    }
}

#[tokio::test]
async fn metadata_columns() {
    let f = line4(false);
    let (status, _, body) = get(&f.app, "/api/metadata/side").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&body), json!(["left", "left", "left", "right"]));
    let (status, headers, body) = get(&f.app, "/api/metadata/x").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.len(), 16);
    assert_eq!(headers["x-shape"], "4,1");
    assert_eq!(floats(&body), vec![0.0, 1.0, 2.0, 10.0]);
    let (status, _, _) = get(&f.app, "/api/metadata/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_exposes_array_headers() {
    let f = line4(true);
    let req = Request::builder()
        .uri("/api/embeddings/identity/metrics/neighborhood_preservation")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    let exposed = resp.headers()["access-control-expose-headers"]
        .to_str()
        .unwrap()
        .to_owned();
    for h in ["x-shape", "x-vmin", "x-vmax", "x-metric"] {
        assert!(exposed.contains(h), "{exposed}");
    }
}

#[tokio::test]
async fn concurrent_reads_match_serial() {
    let f = line4(true);
    let uris = [
        "/api/manifest",
        "/api/embeddings/identity/coords",
        "/api/embeddings/scrambled/metrics/triplet_accuracy",
        "/api/points/1/hd_distances",
        "/api/metadata/side",
    ];
    let mut serial = Vec::new();
    for u in uris {
        serial.push(get(&f.app, u).await.2);
    }
    let tasks: Vec<_> = (0..40)
        .map(|i| {
            let app = f.app.clone();
            let uri = uris[i % uris.len()];
            tokio::spawn(async move { (i % uris.len(), get(&app, uri).await.2) })
        })
        .collect();
    for t in tasks {
        let (which, body) = t.await.unwrap();
        assert_eq!(body, serial[which]);
    }
}
