use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mom_core::pointcloud::{Label, PointcloudData};
use mom_core::Tensor;
use mom_server::{router, AppState, SessionRecord, Store, DEFAULT_DATA_DIR};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn small() -> Value {
    json!({
        "clouds": 200,
        "mom": {
            "epochs_proxy": 40,
            "epochs_embed": 20,
            "restarts_proxy": 1,
            "proxy_splits": 3,
            "embed_batch": 50
        }
    })
}

fn app(dir: &TempDir) -> Router {
    router(AppState::new(Store::open(dir.path()).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router, body: Value) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn record(dir: &TempDir, id: &str) -> SessionRecord {
    Store::open(dir.path()).unwrap().load(id).unwrap().unwrap()
}

fn document(dir: &TempDir, id: &str) -> Vec<u8> {
    std::fs::read(dir.path().join(format!("{id}.json"))).unwrap()
}

/// True labels of the pending queries, read from the persisted document.
fn truths(dir: &TempDir, id: &str) -> Vec<(String, Label)> {
    let r = record(dir, id);
    let data = PointcloudData::build(&r.state.config).unwrap();
    r.state
        .session
        .pending
        .unwrap()
        .queries
        .iter()
        .map(|q| (q.id.clone(), Label::from_target(data.train.labels[q.index])))
        .collect()
}

fn labels_body(labels: &[(String, Label)]) -> Value {
    json!({
        "labels": labels
            .iter()
            .map(|(q, l)| json!({"query_id": q, "label": l.to_string()}))
            .collect::<Vec<_>>()
    })
}

async fn round_ids(app: &Router, id: &str) -> Vec<String> {
    let (s, v) = call(app, "GET", &format!("/sessions/{id}/round"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["queries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|q| q["query_id"].as_str().unwrap().to_string())
        .collect()
}

fn all_x(ids: &[String]) -> Vec<(String, Label)> {
    ids.iter().map(|q| (q.clone(), Label::X)).collect()
}

fn phi(dir: &TempDir, id: &str) -> Vec<Tensor> {
    use mom_core::mom::Embedding;
    record(dir, id)
        .state
        .session
        .phi
        .params()
        .into_iter()
        .cloned()
        .collect()
}

#[tokio::test]
async fn create_returns_fresh_ids_at_round_zero() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let (s, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"experiment": "pointcloud", "config": small()})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["round"], 0);
    assert_eq!(v["rounds"], 5);
    assert_eq!(v["queries_per_round"], 15);
    let other = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    assert_ne!(v["session_id"].as_str().unwrap(), other);
    assert!(dir.path().join(format!("{other}.json")).exists());
}

#[tokio::test]
async fn create_rejects_bad_requests() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let (s, v) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"experiment": "pointcloud", "config": {"mom": {"rounds": 0}}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("rounds"), "{v}");
    let (s, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"experiment": "loans"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"experiment": "pointcloud", "config": {"clouds": "many"}})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let missing = "00000000-0000-4000-8000-000000000000";
    for uri in [
        format!("/sessions/{missing}/round"),
        format!("/sessions/{missing}/metrics"),
        "/sessions/..%2Fetc/round".to_string(),
    ] {
        let (s, _) = call(&app, "GET", &uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
    }
    let (s, _) = call(
        &app,
        "POST",
        &format!("/sessions/{missing}/labels"),
        Some(json!({"labels": []})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn round_is_idempotent_and_hides_ground_truth() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    let uri = format!("/sessions/{id}/round");
    let (s, first) = call(&app, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["status"], "active");
    assert_eq!(first["round"], 0);
    let queries = first["queries"].as_array().unwrap();
    assert_eq!(queries.len(), 15);
    for q in queries {
        let keys: Vec<&str> = q.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["points2d", "query_id"]);
        assert_eq!(q["points2d"].as_array().unwrap().len(), 40);
    }
    let doc = document(&dir, &id);
    let (_, second) = call(&app, "GET", &uri, None).await;
    assert_eq!(first, second);
    assert_eq!(doc, document(&dir, &id));
}

#[tokio::test]
async fn incomplete_or_invalid_submissions_leave_the_document_untouched() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    let ids = round_ids(&app, &id).await;
    let before = document(&dir, &id);
    let uri = format!("/sessions/{id}/labels");

    let partial = all_x(&ids[..14]);
    let (s, v) = call(&app, "POST", &uri, Some(labels_body(&partial))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["ids"], json!([ids[14]]));
    assert_eq!(before, document(&dir, &id));

    let mut dup = all_x(&ids);
    dup.push(dup[0].clone());
    let (s, v) = call(&app, "POST", &uri, Some(labels_body(&dup))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["ids"], json!([ids[0]]));

    let mut unknown = all_x(&ids);
    unknown[3].0 = "r9-q99".into();
    let (s, v) = call(&app, "POST", &uri, Some(labels_body(&unknown))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["ids"], json!(["r9-q99"]));

    let mut body = labels_body(&all_x(&ids));
    body["labels"][2]["label"] = json!("Y");
    let (s, v) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["ids"], json!([ids[2]]));

    assert_eq!(before, document(&dir, &id));
    let (_, m) = call(&app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(m["round"], 0);
}

#[tokio::test]
async fn submitting_before_a_round_is_issued_conflicts() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    let (s, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(json!({"labels": []})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn perfect_round_advances_without_moving_the_projection() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    round_ids(&app, &id).await;
    let before = phi(&dir, &id);
    let truth = truths(&dir, &id);
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(labels_body(&truth)),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["human_accuracy"], 1.0);
    assert_eq!(v["embedding_updated"], false);
    assert_eq!(v["next_round"], 1);
    assert_eq!(before, phi(&dir, &id));
}

#[tokio::test]
async fn imperfect_round_retrains_and_reports_feedback() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(&app, json!({"experiment": "pointcloud", "config": small()})).await;
    round_ids(&app, &id).await;
    let before = phi(&dir, &id);
    let mut labels = truths(&dir, &id);
    let flipped = labels[0].1;
    labels[0].1 = if flipped == Label::X {
        Label::O
    } else {
        Label::X
    };
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(labels_body(&labels)),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["round"], 0);
    assert_eq!(v["next_round"], 1);
    assert_eq!(v["embedding_updated"], true);
    assert!((v["human_accuracy"].as_f64().unwrap() - 14.0 / 15.0).abs() < 1e-12);
    let fb = v["feedback"].as_array().unwrap();
    assert_eq!(fb.len(), 15);
    assert_eq!(fb.iter().filter(|f| f["correct"] == false).count(), 1);
    assert_eq!(fb[0]["truth"], flipped.to_string());
    assert_ne!(before, phi(&dir, &id));
}

#[tokio::test]
async fn feedback_can_be_disabled() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let id = create(
        &app,
        json!({"experiment": "pointcloud", "config": small(), "feedback": false}),
    )
    .await;
    let ids = round_ids(&app, &id).await;
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(labels_body(&all_x(&ids))),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.get("feedback").is_none());
}

#[tokio::test]
async fn metrics_trace_matches_submissions_through_completion() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let mut config = small();
    config["mom"]["rounds"] = json!(3);
    let id = create(&app, json!({"experiment": "pointcloud", "config": config})).await;
    let metrics = format!("/sessions/{id}/metrics");
    let (s, m) = call(&app, "GET", &metrics, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(m["trace"], json!([]));
    assert_eq!(m["config"]["mom"]["rounds"], 3);
    assert_eq!(m["config"]["mom"]["skip_embed_on_perfect"], true);

    let mut returned = Vec::new();
    for r in 0..3 {
        let ids = round_ids(&app, &id).await;
        let (s, mut v) = call(
            &app,
            "POST",
            &format!("/sessions/{id}/labels"),
            Some(labels_body(&all_x(&ids))),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["next_round"], r + 1);
        assert_eq!(v["complete"], r == 2);
        let o = v.as_object_mut().unwrap();
        for k in ["next_round", "complete", "feedback"] {
            o.remove(k);
        }
        returned.push(v);
    }
    let (_, m) = call(&app, "GET", &metrics, None).await;
    assert_eq!(m["trace"], Value::Array(returned));
    assert_eq!(m["complete"], true);

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/round"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "complete");
    assert_eq!(v["queries"], json!([]));
    let (s, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(json!({"labels": []})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn reloaded_document_replays_to_the_same_projection() {
    let first = TempDir::new().unwrap();
    let app_a = app(&first);
    let id = create(
        &app_a,
        json!({"experiment": "pointcloud", "config": small(), "seed": 7}),
    )
    .await;
    let ids = round_ids(&app_a, &id).await;
    call(
        &app_a,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(labels_body(&all_x(&ids))),
    )
    .await;

    let second = TempDir::new().unwrap();
    std::fs::copy(
        first.path().join(format!("{id}.json")),
        second.path().join(format!("{id}.json")),
    )
    .unwrap();
    let app_b = app(&second);

    for app in [&app_a, &app_b] {
        let ids = round_ids(app, &id).await;
        let labels: Vec<(String, Label)> = ids
            .iter()
            .enumerate()
            .map(|(k, q)| (q.clone(), if k % 2 == 0 { Label::X } else { Label::O }))
            .collect();
        let (s, _) = call(
            app,
            "POST",
            &format!("/sessions/{id}/labels"),
            Some(labels_body(&labels)),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }
    assert_eq!(phi(&first, &id), phi(&second, &id));
    let strip = |d: &TempDir| {
        let mut r = record(d, &id);
        r.updated_ms = 0;
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(strip(&first), strip(&second));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_submission_is_rejected_while_training() {
    let dir = TempDir::new().unwrap();
    let app = app(&dir);
    let mut config = small();
    config["mom"]["epochs_embed"] = json!(3000);
    config["mom"]["embed_batch"] = Value::Null;
    let id = create(&app, json!({"experiment": "pointcloud", "config": config})).await;
    let ids = round_ids(&app, &id).await;
    let body = labels_body(&all_x(&ids));
    let uri = format!("/sessions/{id}/labels");
    let slow = {
        let (app, uri, body) = (app.clone(), uri.clone(), body.clone());
        tokio::spawn(async move { call(&app, "POST", &uri, Some(body)).await })
    };
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (s, v) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert!(v["error"].as_str().unwrap().contains("busy"));
    let (s, v) = slow.await.unwrap();
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["next_round"], 1);
}

#[test]
fn data_dir_resolution_prefers_the_flag() {
    let flag = std::path::PathBuf::from("/tmp/explicit");
    assert_eq!(mom_server::resolve_data_dir(Some(flag.clone())), flag);
    if std::env::var_os(mom_server::DATA_DIR_ENV).is_none() {
        assert_eq!(
            mom_server::resolve_data_dir(None),
            std::path::PathBuf::from(DEFAULT_DATA_DIR)
        );
    }
}
