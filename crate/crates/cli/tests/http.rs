use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use riskcore::fixture;
use riskcore::hazard_log::Stamp;
use riskcore::workspace::{Mutation, Workspace};
use riskcore_cli::http::router;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower::ServiceExt;

fn stamp() -> Stamp {
    Stamp::now("test")
}

fn workspace(fixture_name: Option<&str>) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    Workspace::init(&root, fixture_name, false, &stamp()).unwrap();
    (dir, root)
}

struct Reply {
    status: StatusCode,
    version: Option<u64>,
    body: Value,
}

async fn send(app: &Router, method: &str, path: &str, if_match: Option<&str>, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(v) = if_match {
        req = req.header("If-Match", v);
    }
    let body = body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty);
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let version = res
        .headers()
        .get("x-workspace-version")
        .map(|v| v.to_str().unwrap().parse().unwrap());
    if let Some(v) = version {
        assert_eq!(res.headers()["etag"].to_str().unwrap(), format!("\"{v}\""));
    }
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Reply { status, version, body }
}

fn snapshot(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, format!("{:x}", Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn measure_body(apply: bool) -> Value {
    json!({ "proposal": fixture::crossing_intention_proposal(), "apply": apply })
}

#[tokio::test]
async fn whatif_previews_residual_without_mutating() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let app = router(root.clone());
    let before = snapshot(&root);
    let r = send(
        &app,
        "POST",
        "/api/whatif",
        None,
        Some(json!({"initial": 1.25e-7, "effectiveness": 0.999, "integrity": 0.999, "corrupt": 1e-11, "min": 1e-10})),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.version, Some(1));
    // max(1e-10, 1.25e-7 * (1 - 0.999^2)) + 1e-11
    let oracle = f64::max(1e-10, 1.25e-7 * (1.0 - 0.999 * 0.999)) + 1e-11;
    let got = r.body["residual_f64"].as_f64().unwrap();
    assert!(((got - oracle) / oracle).abs() < 1e-12, "{got} vs {oracle}");
    assert!(((got - 2.60e-10) / 2.60e-10).abs() < 0.005);
    assert_eq!(snapshot(&root), before);

    let bad = send(&app, "POST", "/api/whatif", None, Some(json!({"initial": -1, "effectiveness": 0.5, "integrity": 1}))).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(snapshot(&root), before);
}

#[tokio::test]
async fn hazard_log_of_empty_workspace_is_empty() {
    let (_d, root) = workspace(None);
    let r = send(&router(root), "GET", "/api/hazard-log", None, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, json!([]));
    assert_eq!(r.version, Some(1));
}

#[tokio::test]
async fn iterate_after_measure_accepts() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let app = router(root.clone());
    // Iteration 1 finds the violation; the next step derives the goal.
    let r = send(&app, "POST", "/api/iterate", Some("\"1\""), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["step"]["report"]["outcome"], "treatment_required");
    let r = send(&app, "POST", "/api/measures", Some("2"), Some(measure_body(true))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["outcome"]["applied"], json!(["M-CROSSING-INTENTION"]));
    let v = r.version.unwrap();
    let r = send(&app, "POST", "/api/iterate", Some(&format!("W/\"{v}\"")), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["step"]["report"]["outcome"], "accepted");
    assert_eq!(r.body["step"]["report"]["events_found"], json!([]));
    assert_eq!(r.version, Some(v + 1));
}

#[tokio::test]
async fn posts_require_current_version() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let app = router(root.clone());
    let before = snapshot(&root);
    let missing = send(&app, "POST", "/api/iterate", None, None).await;
    assert_eq!(missing.status, StatusCode::BAD_REQUEST);
    assert_eq!(missing.version, Some(1));
    let stale = send(&app, "POST", "/api/iterate", Some("7"), None).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    let garbled = send(&app, "POST", "/api/measures", Some("1"), Some(json!({"proposal": 3}))).await;
    assert_eq!(garbled.status, StatusCode::BAD_REQUEST);
    assert_eq!(snapshot(&root), before);
}

#[tokio::test]
async fn lock_contention_is_conflict() {
    let (_d, root) = workspace(Some(fixture::NAME));
    fs::write(root.join(".lock"), "held by another writer").unwrap();
    let r = send(&router(root.clone()), "POST", "/api/iterate", Some("1"), None).await;
    assert_eq!(r.status, StatusCode::CONFLICT, "{}", r.body);
}

#[tokio::test]
async fn invalid_model_is_unprocessable_with_report() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let mut proposal = fixture::crossing_intention_proposal();
    proposal.hazard_id = "H-NOWHERE".into();
    let r = send(
        &router(root),
        "POST",
        "/api/measures",
        Some("1"),
        Some(json!({"proposal": proposal, "apply": false})),
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", r.body);
    let violations = r.body["violations"].as_array().unwrap();
    assert!(violations.iter().any(|v| v["entity_id"] == "M-CROSSING-INTENTION"), "{}", r.body);
}

#[tokio::test]
async fn reads_report_spec_and_verdicts() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let mut ws = Workspace::open(&root).unwrap();
    ws.transact(None, Mutation::Run { max_iterations: 8 }, &stamp()).unwrap();
    let app = router(root.clone());
    let spec = send(&app, "GET", "/api/spec", None, None).await;
    assert!(spec.body["text"].as_str().unwrap().contains("stop_at_crosswalk"));
    let verdicts = send(&app, "GET", "/api/verdicts", None, None).await;
    assert_eq!(verdicts.body[0]["status"], "violated");
    assert_eq!(verdicts.version, Some(2));
    let page = send(&app, "GET", "/", None, None).await;
    assert_eq!(page.status, StatusCode::OK);
}

#[tokio::test]
async fn report_endpoint_matches_cli_report() {
    let (_d, root) = workspace(Some(fixture::NAME));
    let mut ws = Workspace::open(&root).unwrap();
    ws.transact(None, Mutation::Run { max_iterations: 8 }, &stamp()).unwrap();
    ws.transact(
        None,
        Mutation::ProposeMeasure {
            proposal: fixture::crossing_intention_proposal(),
            apply: true,
        },
        &stamp(),
    )
    .unwrap();
    let http = send(&router(root.clone()), "GET", "/api/reports", None, None).await;
    let out = Command::new(env!("CARGO_BIN_EXE_riskcore"))
        .arg("--workspace")
        .arg(&root)
        .args(["--format", "json", "report"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let cli: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cli, http.body);
    assert_eq!(http.version, Some(3));
}
