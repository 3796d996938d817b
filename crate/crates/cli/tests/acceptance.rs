//! Acceptance suite. Each check prints one PASS/FAIL line; the process exits
//! non-zero if any check fails. Pass substrings as arguments to run a subset:
//! `cargo test -p trace-cli --test acceptance -- scaling`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use http_body_util::BodyExt;
use rand::Rng;
use serde_json::{json, Value};
use tower::ServiceExt;
use trace_cli::bench::{run_bench, BenchConfig};
use trace_core::loader::Dataset;
use trace_core::matrix::Matrix;
use trace_core::model::{DatasetBundle, Embedding, MetricColumn, MetricName};
use trace_core::neighbors::{build_approx_knn, build_exact_knn, knn_recall};
use trace_core::pipeline::{compute_in_memory, precompute, Computed, PrecomputeConfig};
use trace_core::synth::{gaussian_mixture, write_demo_bundle, write_line4_fixture, DemoSpec};
use trace_oracle::fixtures::{self, RigidMotion};
use trace_oracle::Points;
use trace_service::{router, ServiceState};

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    }};
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Every point an anchor, every triplet enumerated.
fn exhaustive_config(n: usize, k: usize) -> PrecomputeConfig {
    PrecomputeConfig {
        k_list: vec![k],
        stability_k: k,
        triplets_per_point: n * n,
        anchor_count: Some(n),
        ..PrecomputeConfig::default()
    }
}

fn column<'a>(
    c: &'a Computed,
    emb: Option<&'a str>,
    metric: MetricName,
) -> Result<&'a MetricColumn, String> {
    c.columns_for(emb, metric)
        .next()
        .ok_or_else(|| format!("no {} column for {emb:?}", metric.as_str()))
}

fn bits(values: &[f32]) -> Vec<u32> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = fixtures::rng(2024);
    let mut worst_rank = 0.0f64;
    for case in 0..50 {
        let n = rng.random_range(20..=300);
        let d = rng.random_range(2..=20);
        let k = [1, 5, 10][rng.random_range(0..3)];
        // alternate continuous and tie-heavy lattice data
        let gen = |rng: &mut _, dim| {
            if case % 2 == 0 {
                fixtures::continuous(rng, n, dim)
            } else {
                fixtures::lattice(rng, n, dim, 5)
            }
        };
        let hd = gen(&mut rng, d);
        let lds = [gen(&mut rng, 2), gen(&mut rng, 2)];
        let bundle = ok(DatasetBundle::new(
            "oracle",
            Matrix::from_vec(n, d, hd.clone()),
            vec![
                Embedding::new("a", Matrix::from_vec(n, 2, lds[0].clone())),
                Embedding::new("b", Matrix::from_vec(n, 2, lds[1].clone())),
            ],
            vec![],
        ))?;
        let c = ok(compute_in_memory(&bundle, &exhaustive_config(n, k)))?;

        let hp = Points::new(&hd, d);
        let hd_knn = trace_oracle::knn(&hp, k);
        let all: Vec<usize> = (0..n).collect();
        let mut ld_knn = Vec::new();
        for (name, ld) in ["a", "b"].iter().zip(&lds) {
            let lp = Points::new(ld, 2);
            let knn = trace_oracle::knn(&lp, k);
            let pres = column(&c, Some(name), MetricName::NeighborhoodPreservation)?;
            ensure!(
                pres.values == trace_oracle::preservation(&hd_knn, &knn, k),
                "case {case}: preservation differs (n={n} d={d} k={k})"
            );
            let trip = column(&c, Some(name), MetricName::TripletAccuracy)?;
            ensure!(
                trip.values == trace_oracle::triplet_accuracy(&hp, &lp),
                "case {case}: triplet accuracy differs (n={n} d={d})"
            );
            let rank = column(&c, Some(name), MetricName::DistanceRankCorrelation)?;
            for (a, b) in rank
                .values
                .iter()
                .zip(trace_oracle::rank_correlation(&hp, &lp, &all))
            {
                worst_rank = worst_rank.max((*a as f64 - b).abs());
            }
            ld_knn.push(knn);
        }
        ensure!(
            worst_rank <= 1e-6,
            "case {case}: rank correlation off by {worst_rank:e}"
        );
        let stab = column(&c, None, MetricName::PointStability)?;
        ensure!(
            stab.values == trace_oracle::stability(&ld_knn, k),
            "case {case}: stability differs (n={n} k={k})"
        );
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1} s, limit 120 s");
    Ok(format!(
        "50 instances, max rank error {worst_rank:.1e}, {secs:.1} s"
    ))
}

fn line4_hand_check() -> Check {
    let dir = ok(tempfile::tempdir())?;
    ok(write_line4_fixture(dir.path()))?;
    let ds = ok(Dataset::open(dir.path()))?;
    let c = ok(compute_in_memory(&ds.bundle, &exhaustive_config(4, 1)))?;
    let pres = &column(&c, Some("scrambled"), MetricName::NeighborhoodPreservation)?.values;
    let trip = &column(&c, Some("scrambled"), MetricName::TripletAccuracy)?.values;
    let third = (1.0f64 / 3.0) as f32;
    let two_thirds = (2.0f64 / 3.0) as f32;
    ensure!(pres == &[0.0, 0.0, 0.0, 1.0], "preservation {pres:?}");
    ensure!(trip == &[third, 0.0, 0.0, two_thirds], "triplets {trip:?}");
    Ok(format!("preservation {pres:?}, triplets {trip:?}"))
}

fn rigid_motion() -> Check {
    let mut rng = fixtures::rng(77);
    let mut compared = 0;
    for case in 0..20 {
        let n = rng.random_range(20..=150);
        let d = rng.random_range(2..=10);
        let hd = fixtures::lattice(&mut rng, n, d, 6);
        let ld = fixtures::lattice(&mut rng, n, 2, 12);
        let other = fixtures::lattice(&mut rng, n, 2, 12);
        let motion = RigidMotion::random(&mut rng);
        let moved = motion.apply(&ld);
        let run = |coords: &[f32]| {
            let bundle = DatasetBundle::new(
                "rigid",
                Matrix::from_vec(n, d, hd.clone()),
                vec![
                    Embedding::new("e", Matrix::from_vec(n, 2, coords.to_vec())),
                    Embedding::new("other", Matrix::from_vec(n, 2, other.clone())),
                ],
                vec![],
            )?;
            compute_in_memory(&bundle, &exhaustive_config(n, 5))
        };
        let before = ok(run(&ld))?;
        let after = ok(run(&moved))?;
        for metric in [
            MetricName::NeighborhoodPreservation,
            MetricName::TripletAccuracy,
            MetricName::DistanceRankCorrelation,
        ] {
            let a = column(&before, Some("e"), metric)?;
            let b = column(&after, Some("e"), metric)?;
            ensure!(
                bits(&a.values) == bits(&b.values),
                "case {case}: {} changed under {motion:?}",
                metric.as_str()
            );
            compared += 1;
        }
        let a = column(&before, None, MetricName::PointStability)?;
        let b = column(&after, None, MetricName::PointStability)?;
        ensure!(
            bits(&a.values) == bits(&b.values),
            "case {case}: stability changed under {motion:?}"
        );
        compared += 1;
    }
    Ok(format!("20 instances, {compared} columns bit-identical"))
}

fn ann_quality() -> Check {
    let mix = gaussian_mixture(20_000, 50, 8, 42);
    let start = Instant::now();
    let approx = ok(build_approx_knn(&mix.points, 50, 0.95, 42))?;
    let secs = start.elapsed().as_secs_f64();
    let exact = ok(build_exact_knn(&mix.points, 50))?;
    let recall = ok(knn_recall(&approx, &exact))?;
    ensure!(recall >= 0.95, "recall {recall:.4} < 0.95");
    ensure!(
        secs < 120.0,
        "approximate build took {secs:.1} s, limit 120 s"
    );
    Ok(format!("recall {recall:.4}, approximate build {secs:.1} s"))
}

fn sampling_fidelity() -> Check {
    let n = 200;
    let mix = gaussian_mixture(n, 10, 4, 5);
    let ld = trace_core::synth::random_projection(&mix.points, 5, 0);
    let embed = |tpp| {
        let bundle = DatasetBundle::new(
            "fidelity",
            mix.points.clone(),
            vec![Embedding::new("e", ld.clone())],
            vec![],
        )?;
        compute_in_memory(
            &bundle,
            &PrecomputeConfig {
                k_list: vec![5],
                triplets_per_point: tpp,
                seed: 9,
                ..PrecomputeConfig::default()
            },
        )
    };
    let exact = ok(embed(n * n))?;
    let exact = &column(&exact, Some("e"), MetricName::TripletAccuracy)?.values;
    let mut notes = Vec::new();
    for (tpp, tol) in [(500, 0.08f32), (2000, 0.05)] {
        let c = ok(embed(tpp))?;
        let sampled = column(&c, Some("e"), MetricName::TripletAccuracy)?;
        ensure!(
            sampled.params.get("mode") == Some(&json!("sampled")),
            "{tpp}/point was not sampled: {:?}",
            sampled.params
        );
        let within = exact
            .iter()
            .zip(&sampled.values)
            .filter(|(a, b)| (**a - **b).abs() <= tol)
            .count();
        let frac = within as f64 / n as f64;
        ensure!(frac >= 0.95, "{tpp}/point: only {within}/{n} within {tol}");
        notes.push(format!("{tpp}/point {within}/{n} within {tol}"));
    }
    Ok(notes.join(", "))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Check {
    // large enough for the approximate HD graph and sampled metrics
    let spec = DemoSpec {
        n: 3000,
        d: 20,
        clusters: 8,
        seed: 42,
    };
    let mut trees = Vec::new();
    for threads in [1, 8] {
        let dir = ok(tempfile::tempdir())?;
        ok(write_demo_bundle(dir.path(), &spec))?;
        let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
        let report = pool.install(|| {
            let ds = Dataset::open(dir.path())?;
            precompute(&ds, &PrecomputeConfig::default())
        });
        let report = ok(report)?;
        ensure!(
            !report.computed.is_empty(),
            "{threads} threads computed nothing"
        );
        trees.push((threads, report.computed.len(), tree(dir.path())));
    }
    let (a, b) = (&trees[0].2, &trees[1].2);
    ensure!(a.keys().eq(b.keys()), "file lists differ");
    let differing: Vec<_> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.clone())
        .collect();
    ensure!(differing.is_empty(), "files differ: {differing:?}");
    Ok(format!(
        "{} files byte-identical, {} columns each, 1 vs 8 threads",
        a.len(),
        trees[0].1
    ))
}

fn scaling() -> Check {
    let mut totals = Vec::new();
    for n in [10_000, 20_000, 40_000] {
        let report = ok(run_bench(&BenchConfig {
            n,
            ..BenchConfig::default()
        }))?;
        eprintln!(
            "  scaling n={n}: {:.1} s {}",
            report.total_seconds,
            serde_json::to_string(&report.stages).unwrap_or_default()
        );
        totals.push((n, report.total_seconds));
    }
    let mut notes: Vec<String> = totals
        .iter()
        .map(|(n, t)| format!("n={n} {t:.1} s"))
        .collect();
    for w in totals.windows(2) {
        let ratio = w[1].1 / w[0].1;
        notes.push(format!("x{ratio:.2}"));
        ensure!(
            ratio <= 3.0,
            "{} -> {} grew x{ratio:.2}: {}",
            w[0].0,
            w[1].0,
            notes.join(", ")
        );
    }
    let last = totals[2].1;
    ensure!(last < 600.0, "n=40000 took {last:.1} s, limit 600 s");
    Ok(notes.join(", "))
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
    let (status, headers) = (resp.status(), resp.headers().clone());
    (
        status,
        headers,
        resp.into_body().collect().await.unwrap().to_bytes(),
    )
}

fn floats(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

async fn service_examples() -> Check {
    let dir = ok(tempfile::tempdir())?;
    ok(write_line4_fixture(dir.path()))?;
    let app = router(Arc::new(ok(ServiceState::load(dir.path()))?));
    let get = |uri: &'static str| send(&app, Method::GET, uri, None);

    // before precompute: metric endpoints answer with a hint
    let (s, _, body) = get("/api/embeddings/scrambled/metrics/neighborhood_preservation?k=1").await;
    ensure!(
        s == StatusCode::NOT_FOUND && String::from_utf8_lossy(&body).contains("precompute"),
        "missing cache: {s}"
    );

    let ds = ok(Dataset::open(dir.path()))?;
    ok(precompute(
        &ds,
        &PrecomputeConfig {
            k_list: vec![1],
            ..PrecomputeConfig::default()
        },
    ))?;
    let app = router(Arc::new(ok(ServiceState::load(dir.path()))?));
    let get = |uri: &'static str| send(&app, Method::GET, uri, None);
    let mut checked = 0;

    let (s, _, m) = get("/api/manifest").await;
    let m: Value = ok(serde_json::from_slice(&m))?;
    ensure!(
        s == StatusCode::OK && m["n"] == 4 && m["embeddings"] == json!(["identity", "scrambled"]),
        "manifest {m}"
    );
    let (_, _, again) = get("/api/manifest").await;
    ensure!(
        serde_json::from_slice::<Value>(&again).ok() == Some(m),
        "manifest not stable"
    );
    checked += 2;

    let (s, h, body) = get("/api/embeddings/scrambled/coords").await;
    ensure!(
        s == StatusCode::OK && body.len() == 32 && h["x-shape"] == "4,2",
        "coords {s} {}",
        body.len()
    );
    ensure!(
        body == ok(std::fs::read(
            dir.path().join("data/embeddings/scrambled.bin")
        ))?[..],
        "coords differ from file"
    );
    let (s, _, _) = get("/api/embeddings/nope/coords").await;
    ensure!(s == StatusCode::NOT_FOUND, "unknown embedding {s}");
    checked += 2;

    let (s, _, body) = get("/api/embeddings/scrambled/metrics/neighborhood_preservation?k=1").await;
    ensure!(
        s == StatusCode::OK && floats(&body) == [0.0, 0.0, 0.0, 1.0],
        "preservation {s} {:?}",
        floats(&body)
    );
    let (s, _, body) = get("/api/embeddings/scrambled/metrics/neighborhood_preservation?k=2").await;
    let listed: Value = ok(serde_json::from_slice(&body))?;
    ensure!(
        s == StatusCode::NOT_FOUND && listed["available_k"] == json!([1]),
        "k=2: {s} {listed}"
    );
    checked += 2;

    let post = |v: Value| send(&app, Method::POST, "/api/selection/neighbors", Some(v));
    for (query, expect) in [
        (
            json!({"indices": [0], "k": 1}),
            Some(json!({"indices": [1]})),
        ),
        (
            json!({"indices": [0, 2], "k": 1}),
            Some(json!({"indices": [1]})),
        ),
        (json!({"indices": [], "k": 1}), None),
    ] {
        let (s, _, body) = post(query.clone()).await;
        match expect {
            Some(e) => ensure!(
                s == StatusCode::OK
                    && serde_json::from_slice::<Value>(&body).ok() == Some(e.clone()),
                "{query}: {s}"
            ),
            None => ensure!(s == StatusCode::UNPROCESSABLE_ENTITY, "{query}: {s}"),
        }
        checked += 1;
    }

    let (s, _, body) = get("/api/points/3/hd_distances").await;
    ensure!(
        s == StatusCode::OK && floats(&body) == [10.0, 9.0, 8.0, 0.0],
        "anchor 3 {:?}",
        floats(&body)
    );
    let (_, _, body) = get("/api/points/0/hd_distances").await;
    ensure!(floats(&body)[0] == 0.0, "anchor 0 {:?}", floats(&body));
    let (s, _, _) = get("/api/points/4/hd_distances").await;
    ensure!(s == StatusCode::NOT_FOUND, "i=n {s}");
    checked += 3;

    let (s, _, body) = get("/api/metadata/side").await;
    ensure!(
        s == StatusCode::OK
            && serde_json::from_slice::<Value>(&body).ok()
                == Some(json!(["left", "left", "left", "right"])),
        "categorical {s}"
    );
    let (s, _, body) = get("/api/metadata/x").await;
    ensure!(
        s == StatusCode::OK && body.len() == 16,
        "continuous {s} {}",
        body.len()
    );
    let (s, _, _) = get("/api/metadata/nope").await;
    ensure!(s == StatusCode::NOT_FOUND, "unknown metadata {s}");
    checked += 3;

    // stability 404s when the bundle has a single embedding
    let single = ok(tempfile::tempdir())?;
    let mut manifest = ok(write_line4_fixture(single.path()))?;
    manifest.embeddings.truncate(1);
    ok(manifest.save(single.path()))?;
    ok(precompute(
        &ok(Dataset::open(single.path()))?,
        &PrecomputeConfig {
            k_list: vec![1],
            ..PrecomputeConfig::default()
        },
    ))?;
    let single_app = router(Arc::new(ok(ServiceState::load(single.path()))?));
    let (s, _, _) = send(
        &single_app,
        Method::GET,
        "/api/embeddings/identity/metrics/point_stability",
        None,
    )
    .await;
    ensure!(s == StatusCode::NOT_FOUND, "single-embedding stability {s}");
    checked += 1;

    // an empty-metric bundle lists no metrics
    let empty = ok(tempfile::tempdir())?;
    ok(write_line4_fixture(empty.path()))?;
    let empty_app = router(Arc::new(ok(ServiceState::load(empty.path()))?));
    let (_, _, body) = send(&empty_app, Method::GET, "/api/manifest", None).await;
    let m: Value = ok(serde_json::from_slice(&body))?;
    ensure!(
        m["metrics"]["identity"] == json!([]) && m["metrics"]["scrambled"] == json!([]),
        "empty bundle {m}"
    );
    checked += 1;

    Ok(format!("{checked} endpoint examples"))
}

/// Every served metric column of a precomputed demo bundle equals its file.
async fn service_bit_identity() -> Check {
    let dir = ok(tempfile::tempdir())?;
    ok(write_demo_bundle(
        dir.path(),
        &DemoSpec {
            n: 600,
            d: 8,
            clusters: 4,
            seed: 1,
        },
    ))?;
    let ds = ok(Dataset::open(dir.path()))?;
    let report = ok(precompute(&ds, &PrecomputeConfig::default()))?;
    let app = router(Arc::new(ok(ServiceState::load(dir.path()))?));
    let mut compared = 0;
    for entry in &report.manifest.precomputed.columns {
        let file = ok(std::fs::read(dir.path().join(&entry.path)))?;
        let emb = entry
            .embedding
            .clone()
            .unwrap_or_else(|| report.manifest.embeddings[0].name.clone());
        let query: Vec<String> = entry
            .params
            .iter()
            .filter(|(k, v)| {
                ["k", "seed", "anchors", "triplets_per_point"].contains(&k.as_str()) && v.is_u64()
            })
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let uri = format!(
            "/api/embeddings/{emb}/metrics/{}?{}",
            entry.metric_name.as_str(),
            query.join("&")
        );
        let (s, h, body) = send(&app, Method::GET, &uri, None).await;
        ensure!(
            s == StatusCode::OK,
            "{uri}: {s} {}",
            String::from_utf8_lossy(&body)
        );
        ensure!(body == file, "{uri}: body differs from {}", entry.path);
        ensure!(
            h["x-shape"] == format!("{},1", ds.bundle.n()).as_str(),
            "{uri}: shape {:?}",
            h["x-shape"]
        );
        compared += 1;
    }
    Ok(format!(
        "{compared} metric columns bit-identical to cache files"
    ))
}

fn service_contract() -> Check {
    let rt = ok(tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build())?;
    let a = rt.block_on(service_examples())?;
    let b = rt.block_on(service_bit_identity())?;
    Ok(format!("{a}; {b}"))
}

fn main() {
    let checks: [(&str, CheckFn); 8] = [
        ("oracle-equivalence", oracle_equivalence),
        ("line4-hand-check", line4_hand_check),
        ("rigid-motion-invariance", rigid_motion),
        ("ann-quality", ann_quality),
        ("sampling-fidelity", sampling_fidelity),
        ("determinism", determinism),
        ("scaling", scaling),
        ("service-contract", service_contract),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{took:.1?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{took:.1?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
