use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use erval_core::labeling::{BenchmarkSet, QcConfig};
use erval_core::report::{benchmark_report, to_json_bytes, EstimateOptions};
use erval_core::{AttributeTable, Clustering};
use erval_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn prediction() -> Clustering {
    Clustering::from_groups([vec!["r1", "r2"], vec!["r3", "r4", "r5"]]).unwrap()
}

fn attributes() -> AttributeTable {
    let mut a = AttributeTable::new(vec!["city".into()]);
    a.insert("r1".into(), "Lutgard De Jonghe", vec!["Leuven".into()]).unwrap();
    a.insert("r2".into(), "L. De Jonghe", vec!["Leuven".into()]).unwrap();
    a.insert("r3".into(), "L. C. De Jonghe", vec!["Gent".into()]).unwrap();
    a.insert("r4".into(), "Jan Peeters", vec!["Gent".into()]).unwrap();
    a.insert("r5".into(), "J. Peeters", vec!["Brugge".into()]).unwrap();
    a
}

struct Harness {
    dir: tempfile::TempDir,
    clock: Arc<Mutex<DateTime<Utc>>>,
    app: Router,
}

fn config(dir: &std::path::Path, token: Option<&str>) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_path_buf(),
        prediction: prediction(),
        prediction_snapshot: "pred-v1".into(),
        attributes: Some(attributes()),
        benchmark: None,
        token: token.map(str::to_string),
        qc: QcConfig::default(),
    }
}

fn app_for(dir: &std::path::Path, clock: &Arc<Mutex<DateTime<Utc>>>, token: Option<&str>) -> Router {
    let c = clock.clone();
    let state = AppState::open(config(dir, token))
        .unwrap()
        .with_clock(Arc::new(move || *c.lock().unwrap()));
    router(Arc::new(state))
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(Mutex::new(Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()));
        let app = app_for(dir.path(), &clock, None);
        Self { dir, clock, app }
    }

    fn advance(&self, d: Duration) {
        *self.clock.lock().unwrap() += d;
    }

    fn restart(&mut self) {
        self.app = app_for(self.dir.path(), &self.clock, None);
    }

    async fn raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        send(&self.app, method, uri, body, None).await
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn canonical_session(h: &Harness) -> Value {
    let (status, body) = h
        .post(
            "/sessions",
            json!({"v": 1, "session_id": "s1", "design": "pps_record", "rng_seed": 7, "seeds": ["r3", "r4"]}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

async fn label_canonical(h: &Harness) {
    let (s, _) = h.post("/tasks/s1-0001/lease", json!({"labeler": "ann"})).await;
    assert_eq!(s, StatusCode::OK);
    for (op, r) in [("remove", "r4"), ("remove", "r5"), ("add", "r1"), ("add", "r2")] {
        let (s, body) = h
            .post("/tasks/s1-0001/edits", json!({"labeler": "ann", "op": op, "record": r}))
            .await;
        assert_eq!(s, StatusCode::OK, "{body}");
    }
    let (s, body) = h.post("/tasks/s1-0001/finalize", json!({"labeler": "ann"})).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["resolved_cluster"], json!(["r1", "r2", "r3"]));
    assert_eq!(body["task"]["p_c"], json!(0.6));

    let (s, _) = h.post("/tasks/s1-0002/lease", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h
        .post("/tasks/s1-0002/edits", json!({"labeler": "bob", "op": "remove", "record": "r3"}))
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, body) = h.post("/tasks/s1-0002/finalize", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["resolved_cluster"], json!(["r4", "r5"]));
}

#[tokio::test]
async fn canonical_workflow_end_to_end() {
    let mut h = Harness::new();
    let created = canonical_session(&h).await;
    assert_eq!(created["v"], 1);
    assert_eq!(created["tasks"][0]["predicted_cluster"], json!(["r3", "r4", "r5"]));
    assert_eq!(created["tasks"][1]["predicted_cluster"], json!(["r3", "r4", "r5"]));
    label_canonical(&h).await;

    let (s, list) = h.get("/sessions").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list["total"], 1);
    assert_eq!(list["items"][0]["complete"], true);

    let (s, bytes) = h.raw(Method::GET, "/sessions/s1/benchmark", None).await;
    assert_eq!(s, StatusCode::OK);
    let set = BenchmarkSet::read_jsonl(bytes.as_slice()).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.draws[0].labeler.as_deref(), Some("ann"));

    // the journal alone reproduces the state
    let (_, before) = h.get("/sessions/s1").await;
    h.restart();
    let (_, after) = h.get("/sessions/s1").await;
    assert_eq!(before, after);
    let journal = std::fs::read_to_string(h.dir.path().join("s1.jsonl")).unwrap();
    // created + 2 x (lease, finalize) + 5 edits
    assert_eq!(journal.lines().count(), 10);
}

#[tokio::test]
async fn estimates_match_the_library_path_byte_for_byte() {
    let h = Harness::new();
    canonical_session(&h).await;
    let (s, body) = h.get("/estimates?session=s1").await;
    assert_eq!(s, StatusCode::CONFLICT, "{body}");
    label_canonical(&h).await;

    let (s, bytes) = h
        .raw(Method::GET, "/estimates?session=s1&metrics=pairwise_precision,bcubed_recall", None)
        .await;
    assert_eq!(s, StatusCode::OK);
    let (_, jsonl) = h.raw(Method::GET, "/sessions/s1/benchmark", None).await;
    let set = BenchmarkSet::read_jsonl(jsonl.as_slice()).unwrap();
    let opts = EstimateOptions {
        metrics: erval_core::report::parse_metrics("pairwise_precision,bcubed_recall").unwrap(),
        ..EstimateOptions::default()
    };
    let expected = to_json_bytes(&benchmark_report(&set, &prediction(), &opts).unwrap(), false).unwrap();
    assert_eq!(bytes, expected);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["v"], 1);
    assert_eq!(v["k"], 2);

    let (s, _) = h.get("/estimates").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.get("/estimates?session=s1&metrics=precision").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn edits_are_validated() {
    let h = Harness::new();
    canonical_session(&h).await;
    let edit = |labeler: &str, op: &str, r: &str| json!({"labeler": labeler, "op": op, "record": r});

    // no lease yet
    let (s, body) = h.post("/tasks/s1-0001/edits", edit("ann", "remove", "r4")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "lease_conflict");

    h.post("/tasks/s1-0001/lease", json!({"labeler": "ann"})).await;
    let (s, body) = h.post("/tasks/s1-0001/edits", edit("ann", "remove", "r3")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["message"], "seed record is immovable");
    assert_eq!(body["v"], 1);

    let (s, _) = h.post("/tasks/s1-0001/edits", edit("ann", "add", "r4")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h.post("/tasks/s1-0001/edits", edit("ann", "add", "r9")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h.post("/tasks/s1-0001/edits", edit("bob", "remove", "r4")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h.post("/tasks/s1-0001/lease", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, _) = h.post("/tasks/nope/edits", edit("ann", "remove", "r4")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.get("/sessions/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.get("/clusters/r9/membership-matrix").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, body) = h.post("/tasks/s1-0001/edits", json!({"labeler": "ann", "op": "explode", "record": "r4"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"]["code"], "bad_body");
    let (s, _) = h.post("/tasks/s1-0001/edits", json!({"v": 2, "labeler": "ann", "op": "remove", "record": "r4"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // rejected requests leave no trace in the journal
    let journal = std::fs::read_to_string(h.dir.path().join("s1.jsonl")).unwrap();
    assert_eq!(journal.lines().count(), 2);
}

#[tokio::test]
async fn leases_expire_and_next_task_skips_held_tasks() {
    let h = Harness::new();
    canonical_session(&h).await;
    let (_, next) = h.get("/sessions/s1/tasks/next?labeler=ann").await;
    assert_eq!(next["task"]["task"]["task_id"], "s1-0001");
    assert_eq!(next["open"], 2);
    h.post("/tasks/s1-0001/lease", json!({"labeler": "ann", "ttl_minutes": 5})).await;

    let (_, next) = h.get("/sessions/s1/tasks/next?labeler=bob").await;
    assert_eq!(next["task"]["task"]["task_id"], "s1-0002");
    let (_, next) = h.get("/sessions/s1/tasks/next?labeler=ann").await;
    assert_eq!(next["task"]["task"]["task_id"], "s1-0001");

    h.advance(Duration::minutes(6));
    let (s, _) = h.post("/tasks/s1-0001/lease", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h
        .post("/tasks/s1-0001/edits", json!({"labeler": "ann", "op": "remove", "record": "r4"}))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h.post("/tasks/s1-0001/release", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h.post("/tasks/s1-0001/lease", json!({"labeler": "ann", "ttl_minutes": 0})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn finalize_is_blocked_by_hard_flags_only() {
    let h = Harness::new();
    canonical_session(&h).await;
    h.post("/tasks/s1-0002/lease", json!({"labeler": "bob"})).await;
    // r1 shares no token with the seed's label: a soft flag, not a blocker
    let (s, body) = h
        .post("/tasks/s1-0002/edits", json!({"labeler": "bob", "op": "add", "record": "r1"}))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["flags"][0]["severity"], "soft");
    assert_eq!(body["flags"][0]["code"], "no_shared_token");
    let (s, _) = h.post("/tasks/s1-0002/finalize", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = h.post("/tasks/s1-0002/finalize", json!({"labeler": "bob"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, qc) = h.get("/sessions/s1/qc").await;
    assert_eq!(qc["flags"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn membership_matrix_covers_intersecting_predicted_clusters() {
    let h = Harness::new();
    canonical_session(&h).await;
    label_canonical(&h).await;
    let (s, m) = h.get("/clusters/r1/membership-matrix").await;
    assert_eq!(s, StatusCode::OK, "{m}");
    assert_eq!(m["members"], json!(["r1", "r2", "r3"]));
    assert_eq!(m["total"], 5);
    let rows = m["rows"].as_array().unwrap();
    let ids: Vec<&str> = rows.iter().map(|r| r["record_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["r1", "r2", "r3", "r4", "r5"]);
    let truth: Vec<&str> = rows.iter().map(|r| r["true_cluster"].as_str().unwrap()).collect();
    assert_eq!(truth, ["r1", "r1", "r1", "r4", "r4"]);
    assert_eq!(rows[4]["in_true_cluster"], false);
    assert_eq!(rows[2]["predicted_cluster"], rows[3]["predicted_cluster"]);
    assert_eq!(rows[0]["attributes"]["city"], "Leuven");
    assert_eq!(m["predicted_clusters"].as_array().unwrap().len(), 2);

    let (_, page) = h.get("/clusters/r1/membership-matrix?limit=2&offset=3").await;
    assert_eq!(page["rows"].as_array().unwrap().len(), 2);
    assert_eq!(page["rows"][0]["record_id"], "r4");
}

#[tokio::test]
async fn audit_tags_are_journaled_and_weighted() {
    let h = Harness::new();
    canonical_session(&h).await;
    let (s, _) = h
        .post("/clusters/r1/tags", json!({"direction": "overclustering", "label": "same name"}))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    label_canonical(&h).await;

    let (s, body) = h
        .post(
            "/clusters/r1/tags",
            json!({"direction": "underclustering", "label": "name variation", "note": "initials"}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    assert_eq!(body["tag"]["p_c"], json!(0.6));
    let (s, _) = h
        .post("/clusters/r4/tags", json!({"direction": "overclustering", "label": "same name"}))
        .await;
    assert_eq!(s, StatusCode::CREATED);
    // {r4, r5} has no underclustering error
    let (s, body) = h
        .post("/clusters/r4/tags", json!({"direction": "underclustering", "label": "same name"}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    let (_, audit) = h.get("/sessions/s1/audit").await;
    assert_eq!(audit["tags"].as_array().unwrap().len(), 2);
    for f in audit["frequencies"].as_array().unwrap() {
        assert_eq!(f["frequency"], json!(1.0));
    }
}

#[tokio::test]
async fn search_and_summary_stats() {
    let h = Harness::new();
    let (s, page) = h.get("/search?q=de%20jonhge").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page["limit"], 100);
    assert_eq!(page["total"], 3);
    assert_eq!(page["items"][0]["matched"], 2);
    let (s, _) = h.get("/search?q=%20").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = h.get("/search").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = h.get("/search?q=a&limit=100000").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, stats) = h.get("/summary-stats?hill_grid=0,2,inf").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(stats["v"], 1);
    assert_eq!(stats["avg_cluster_size"], json!(2.5));
    assert_eq!(stats["matching_rate"], json!(1.0));
    assert_eq!(stats["hill"][2]["q"], "inf");
    let (s, _) = h.get("/summary-stats?hill_grid=-1").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sessions_are_paginated_and_ids_validated() {
    let h = Harness::new();
    for i in 0..3 {
        let (s, body) = h
            .post(
                "/sessions",
                json!({"session_id": format!("p{i}"), "design": "pps_record", "k": 2, "rng_seed": i}),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED, "{body}");
    }
    let (_, page) = h.get("/sessions?limit=2&offset=1").await;
    assert_eq!(page["total"], 3);
    let ids: Vec<&str> = page["items"].as_array().unwrap().iter().map(|i| i["session_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["p1", "p2"]);

    let (s, _) = h
        .post("/sessions", json!({"session_id": "p0", "design": "pps_record", "k": 2, "rng_seed": 1}))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = h
        .post("/sessions", json!({"session_id": "../x", "design": "pps_record", "k": 2, "rng_seed": 1}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h
        .post("/sessions", json!({"session_id": "u", "design": "uniform_cluster", "k": 2, "rng_seed": 1}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = h
        .post("/sessions", json!({"session_id": "u", "design": "pps_record", "rng_seed": 1}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, tasks) = h.get("/sessions/p0/tasks?limit=1").await;
    assert_eq!(tasks["total"], 2);
    assert_eq!(tasks["items"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(Mutex::new(Utc::now()));
    let app = app_for(dir.path(), &clock, Some("s3cret"));
    let (s, body) = send(&app, Method::GET, "/sessions", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["error"]["code"], "unauthorized");
    let (s, _) = send(&app, Method::GET, "/sessions", None, Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = send(&app, Method::GET, "/sessions", None, Some("s3cret")).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = send(&app, Method::GET, "/health", None, None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn configured_benchmark_serves_estimates_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), None);
    let jsonl = "{\"members\":[\"r1\",\"r2\",\"r3\"],\"p_c\":0.6,\"design\":\"pps_record\"}\n\
                 {\"members\":[\"r4\",\"r5\"],\"p_c\":0.4,\"design\":\"pps_record\"}\n";
    let set = BenchmarkSet::read_jsonl(jsonl.as_bytes()).unwrap();
    cfg.benchmark = Some(set.clone());
    let app = router(Arc::new(AppState::open(cfg).unwrap()));
    let (s, bytes) = send(&app, Method::GET, "/estimates", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let expected = to_json_bytes(&benchmark_report(&set, &prediction(), &EstimateOptions::default()).unwrap(), false).unwrap();
    assert_eq!(bytes, expected);
    let (s, bytes) = send(&app, Method::GET, "/clusters/r4/membership-matrix", None, None).await;
    assert_eq!(s, StatusCode::OK);
    let m: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(m["source"], "benchmark");
    assert_eq!(m["total"], 3);
}
