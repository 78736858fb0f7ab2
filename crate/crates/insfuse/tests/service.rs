use std::fs;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use insfuse::io;
use insfuse::server::router;
use insfuse::session::SessionStore;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const SHOTS: usize = 30;

fn shot(i: usize) -> String {
    format!("sh{i:02}")
}

fn run_text() -> String {
    (0..SHOTS)
        .map(|i| {
            format!(
                "t1 Q0 {} {} {:.6} base\n",
                shot(i),
                i + 1,
                1.0 - i as f64 * 0.03
            )
        })
        .collect()
}

/// Even shots sit near one direction, odd shots near another.
fn features_text() -> String {
    (0..SHOTS)
        .map(|i| {
            let j = i as f64 * 0.01;
            if i % 2 == 0 {
                format!("{}\t1\t{j}\n", shot(i))
            } else {
                format!("{}\t{j}\t1\n", shot(i))
            }
        })
        .collect()
}

struct Fixture {
    _dir: TempDir,
    store: Arc<SessionStore>,
    app: Router,
}

fn fixture(with_features: bool) -> Fixture {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let assets = dir.path().join("assets");
    fs::create_dir_all(&data).unwrap();
    fs::create_dir_all(&assets).unwrap();
    fs::write(data.join("base.run"), run_text()).unwrap();
    let small: String = run_text()
        .lines()
        .take(10)
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(data.join("small.run"), small).unwrap();
    if with_features {
        fs::write(data.join("features.tsv"), features_text()).unwrap();
    }
    fs::write(assets.join("sh00.jpg"), b"\xff\xd8jpeg").unwrap();
    let store = Arc::new(SessionStore::new(data, Some(assets)));
    let app = router(store.clone());
    Fixture {
        _dir: dir,
        store,
        app,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn json_call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn create(app: &Router, strategy: Value) -> String {
    let (status, v) = json_call(
        app,
        "POST",
        "/sessions",
        Some(json!({"run": "base.run", "topic_id": "t1", "strategy": strategy})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn label(app: &Router, id: &str, labels: &[(&str, &str)]) -> Value {
    let labels: Vec<Value> = labels
        .iter()
        .map(|(s, p)| json!({"shot_id": s, "polarity": p}))
        .collect();
    let (status, v) = json_call(
        app,
        "POST",
        &format!("/sessions/{id}/labels"),
        Some(json!({"labels": labels})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

async fn order(app: &Router, id: &str) -> Vec<String> {
    let (_, v) = json_call(app, "GET", &format!("/sessions/{id}/ranking"), None).await;
    v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["shot_id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn topk_recommends_the_first_k_shots() {
    let f = fixture(false);
    let (status, v) = json_call(
        &f.app,
        "POST",
        "/sessions",
        Some(json!({"run": "small.run", "topic_id": "t1", "strategy": {"kind": "topk", "k": 5}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let want: Vec<String> = (0..5).map(shot).collect();
    assert_eq!(v["recommendations"], json!(want));
    let id = v["session_id"].as_str().unwrap();
    let all: Vec<String> = (0..10).map(shot).collect();
    assert_eq!(order(&f.app, id).await, all);
}

#[tokio::test]
async fn creation_errors_have_stable_codes() {
    let f = fixture(false);
    let cases = [
        (
            json!({"run": "base.run", "topic_id": "t9", "strategy": {"kind": "topk", "k": 5}}),
            404,
            "unknown_topic",
        ),
        (
            json!({"run": "other.run", "topic_id": "t1", "strategy": {"kind": "topk", "k": 5}}),
            404,
            "unknown_run",
        ),
        (
            json!({"run": "base.run", "topic_id": "t1", "strategy": {"kind": "caaf"}}),
            422,
            "missing_features",
        ),
        (
            json!({"run": "base.run", "topic_id": "t1", "strategy": {"kind": "topk", "k": 0}}),
            422,
            "invalid_strategy",
        ),
        (
            json!({"run": "../base.run", "topic_id": "t1", "strategy": {"kind": "topk", "k": 5}}),
            400,
            "bad_request",
        ),
    ];
    for (body, status, code) in cases {
        let (s, v) = json_call(&f.app, "POST", "/sessions", Some(body.clone())).await;
        assert_eq!(s.as_u16(), status, "{body} -> {v}");
        assert_eq!(v["code"], code, "{body} -> {v}");
    }
    let (s, _) = call(&f.app, "POST", "/sessions", Some(json!({"run": 3}))).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn unknown_session_is_404() {
    let f = fixture(false);
    for (method, uri, body) in [
        ("GET", "/sessions/s99", None),
        ("GET", "/sessions/s99/ranking", None),
        ("GET", "/sessions/s99/export", None),
        ("POST", "/sessions/s99/labels", Some(json!({"labels": []}))),
    ] {
        let (s, v) = json_call(&f.app, method, uri, body).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["code"], "unknown_session");
    }
}

#[tokio::test]
async fn topk_positive_stays_first_and_negative_sinks() {
    let f = fixture(false);
    let id = create(&f.app, json!({"kind": "topk", "k": 5, "mode": "both"})).await;
    let out = label(&f.app, &id, &[("sh00", "positive"), ("sh01", "negative")]).await;
    assert_eq!(out["version"], 1);
    let now = order(&f.app, &id).await;
    assert_eq!(now[0], "sh00");
    assert_eq!(now.last().unwrap(), "sh01");
    assert_eq!(now.len(), SHOTS);
    let recs: Vec<String> = serde_json::from_value(out["recommendations"].clone()).unwrap();
    assert!(!recs.contains(&"sh00".to_string()) && !recs.contains(&"sh01".to_string()));
}

#[tokio::test]
async fn caaf_positive_is_clamped_to_one() {
    let f = fixture(true);
    let id = create(
        &f.app,
        json!({"kind": "caaf", "a_probe": 12, "n_gallery": 30}),
    )
    .await;
    label(&f.app, &id, &[("sh03", "positive"), ("sh00", "negative")]).await;
    let snap = f.store.snapshot(&id).unwrap();
    let state = snap.caaf_state().unwrap();
    let pos = state.element("sh03").unwrap();
    let neg = state.element("sh00").unwrap();
    assert_eq!(state.f()[pos], 1.0);
    assert_eq!(state.f()[neg], 0.0);
    let now = order(&f.app, &id).await;
    assert_eq!(now[0], "sh03");
}

#[tokio::test]
async fn repeated_batch_bumps_version_only() {
    let f = fixture(false);
    let id = create(&f.app, json!({"kind": "topk", "k": 3})).await;
    label(&f.app, &id, &[("sh02", "positive")]).await;
    let first = order(&f.app, &id).await;
    let out = label(&f.app, &id, &[("sh02", "positive")]).await;
    assert_eq!(out["version"], 2);
    assert_eq!(order(&f.app, &id).await, first);
    let (_, summary) = json_call(&f.app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(summary["log"].as_array().unwrap().len(), 2);
    assert_eq!(
        summary["labels"],
        json!([{"shot_id": "sh02", "polarity": "positive"}])
    );
}

#[tokio::test]
async fn bad_labels_are_rejected_not_logged() {
    let f = fixture(false);
    let id = create(&f.app, json!({"kind": "topk", "k": 3})).await;
    let out = label(
        &f.app,
        &id,
        &[("zz", "positive"), ("sh01", "maybe"), ("sh02", "negative")],
    )
    .await;
    assert_eq!(
        out["rejected"],
        json!([{"shot_id": "zz", "reason": "unknown_shot"}, {"shot_id": "sh01", "reason": "invalid_polarity"}])
    );
    let (_, summary) = json_call(&f.app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(
        summary["log"][0]["labels"],
        json!([{"shot_id": "sh02", "polarity": "negative"}])
    );
}

#[tokio::test]
async fn export_round_trips_through_the_run_reader() {
    let f = fixture(false);
    let id = create(&f.app, json!({"kind": "topk", "k": 4})).await;
    label(&f.app, &id, &[("sh05", "positive")]).await;
    let (status, bytes) = call(&f.app, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    let runs = io::read_run(&text).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].topic_id(), "t1");
    assert_eq!(
        runs[0].shot_ids().collect::<Vec<_>>(),
        order(&f.app, &id).await
    );
    assert_eq!(io::write_run(&runs[0], 1000), text);
    let replayed = f.store.replay(&id).unwrap();
    assert_eq!(replayed.export(f.store.export_depth()), text);
}

#[tokio::test]
async fn ranking_limit_truncates_entries() {
    let f = fixture(false);
    let id = create(&f.app, json!({"kind": "topk", "k": 4})).await;
    let (_, v) = json_call(
        &f.app,
        "GET",
        &format!("/sessions/{id}/ranking?limit=3"),
        None,
    )
    .await;
    assert_eq!(v["total"], SHOTS);
    assert_eq!(v["entries"].as_array().unwrap().len(), 3);
    assert_eq!(v["entries"][2]["rank"], 3);
}

#[tokio::test]
async fn keyframes_are_served_from_the_asset_directory() {
    let f = fixture(false);
    let (status, bytes) = call(&f.app, "GET", "/assets/keyframes/sh00", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"\xff\xd8jpeg");
    for uri in [
        "/assets/keyframes/sh01",
        "/assets/keyframes/..%2Fdata%2Fbase",
    ] {
        let (status, bytes) = call(&f.app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["code"], "unknown_asset");
    }
}
