use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ldwb_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn campaign() -> Value {
    let histories: Vec<Value> = (0..3)
        .map(|h| {
            let candidates: Vec<Value> = ["m1", "m2", "GroundTruth"]
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    json!({
                        "candidate_id": format!("h{h}/c{c}"),
                        "sample_id": format!("d{h}#1"),
                        "source": s,
                        "text": format!("response {c} to {h}"),
                    })
                })
                .collect();
            json!({
                "history_id": format!("h{h}"),
                "turns": [{"speaker": "user", "text": "I argued with my sister."}],
                "candidates": candidates,
            })
        })
        .collect();
    let all_positive = json!({"correctness": "positive", "appropriateness": "positive",
                              "contextualization": "positive", "listening": "positive"});
    let qualification: Vec<Value> = (0..2)
        .map(|q| {
            json!({
                "history": [{"speaker": "user", "text": "Work was hard."}],
                "candidate": {"candidate_id": format!("q{q}"), "sample_id": format!("v{q}"),
                              "source": "GroundTruth", "text": "What happened at work?"},
                "gold": all_positive,
            })
        })
        .collect();
    json!({
        "config": {"raters_per_item": 3, "histories_per_worker": 3, "candidates_per_history": 3,
                   "qualification_size": 2, "qualification_threshold": 0.6},
        "workers": ["w0", "w1", "w2", "w3"],
        "seed": 11,
        "histories": histories,
        "qualification": qualification,
    })
}

fn judgment(worker: &str, candidate: &str, vote: &str) -> Value {
    let labels: Vec<&str> = if vote == "negative" { vec!["generic"] } else { vec![] };
    json!({
        "worker_id": worker,
        "candidate_id": candidate,
        "votes": {"correctness": vote, "appropriateness": vote, "contextualization": vote, "listening": vote},
        "error_labels": labels,
        "timestamp": 1_700_000_000_000u64,
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn qualify(app: &Router, worker: &str, vote: &str) {
    for _ in 0..2 {
        let (status, task) = call(app, "GET", &format!("/task/next?worker={worker}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(task["phase"], "qualification");
        let id = task["candidate_id"].as_str().unwrap();
        let (status, _) = call(app, "POST", "/judgment", Some(judgment(worker, id, vote))).await;
        assert_eq!(status, StatusCode::CREATED);
    }
}

/// Judges every remaining task of `worker`, alternating votes.
async fn work_through(app: &Router, worker: &str) -> usize {
    let mut n = 0;
    loop {
        let (status, task) = call(app, "GET", &format!("/task/next?worker={worker}"), None).await;
        if status == StatusCode::NO_CONTENT {
            return n;
        }
        assert_eq!(status, StatusCode::OK);
        assert_eq!(task["phase"], "main");
        assert!(task.get("source").is_none() && task["candidate_text"].is_string());
        let vote = if n % 3 == 0 { "negative" } else { "positive" };
        let id = task["candidate_id"].as_str().unwrap().to_owned();
        let (status, ack) = call(app, "POST", "/judgment", Some(judgment(worker, &id, vote))).await;
        assert_eq!(status, StatusCode::CREATED, "{ack}");
        n += 1;
    }
}

#[tokio::test]
async fn full_campaign_flow() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let app = router(Arc::new(AppState::new(Some(journal.clone()))));

    let (status, _) = call(&app, "GET", "/task/next?worker=w0", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let (status, summary) = call(&app, "POST", "/campaign", Some(campaign())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(summary["candidates"], 9);
    assert_eq!(summary["tasks"], 27);
    let (status, _) = call(&app, "POST", "/campaign", Some(campaign())).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // Main tasks are locked until the qualification is passed.
    let (status, _) = call(&app, "POST", "/judgment", Some(judgment("w0", "h0/c0", "positive"))).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    for w in ["w0", "w1", "w2", "w3"] {
        qualify(&app, w, "positive").await;
    }
    let (_, progress) = call(&app, "GET", "/progress?worker=w0", None).await;
    assert_eq!(progress["qualification"], "passed");

    let (status, _) = call(&app, "GET", "/reports/majority", None).await;
    assert_eq!(status, StatusCode::CONFLICT, "incomplete annotation");

    let mut total = 0;
    for w in ["w0", "w1", "w2", "w3"] {
        total += work_through(&app, w).await;
    }
    assert_eq!(total, 27);

    let (status, _) = call(&app, "POST", "/judgment", Some(judgment("w0", "q0", "positive"))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut reports = Vec::new();
    for kind in ["majority", "kappa", "errors"] {
        let (status, body) = call(&app, "GET", &format!("/reports/{kind}"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}: {body}");
        reports.push(body);
    }
    assert_eq!(reports[0]["candidates"]["GroundTruth"], 3);

    let (status, export) = call(&app, "GET", "/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let export = export.as_str().unwrap().to_owned();
    assert_eq!(export.lines().count(), 1 + 27 + 8);
    assert_eq!(export, std::fs::read_to_string(&journal).unwrap());

    // Restarting on the same journal replays it to identical reports.
    let restarted = router(Arc::new(AppState::new(Some(journal.clone()))));
    let (status, summary) = call(&restarted, "POST", "/campaign", Some(campaign())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(summary["judgments"], 35);
    for (kind, before) in ["majority", "kappa", "errors"].iter().zip(&reports) {
        let (_, after) = call(&restarted, "GET", &format!("/reports/{kind}"), None).await;
        assert_eq!(&after, before, "{kind}");
    }
}

#[tokio::test]
async fn rejections_carry_status_codes() {
    let app = router(Arc::new(AppState::new(None)));
    let (status, _) = call(&app, "POST", "/campaign", Some(campaign())).await;
    assert_eq!(status, StatusCode::CREATED);

    let (status, body) = call(&app, "GET", "/task/next?worker=nobody", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nobody"));
    let (status, _) = call(&app, "GET", "/task/next", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Negative appropriateness without error labels.
    let mut unmotivated = judgment("w0", "q0", "negative");
    unmotivated["error_labels"] = json!([]);
    let (status, _) = call(&app, "POST", "/judgment", Some(unmotivated)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut extra = judgment("w0", "q0", "positive");
    extra["comment"] = json!("hi");
    let (status, _) = call(&app, "POST", "/judgment", Some(extra)).await;
    assert!(status.is_client_error());

    let (status, _) = call(&app, "POST", "/judgment", Some(judgment("w0", "nope", "positive"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // Failing the qualification locks the worker out.
    qualify(&app, "w1", "unsure").await;
    let (status, _) = call(&app, "GET", "/task/next?worker=w1", None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (_, progress) = call(&app, "GET", "/progress?worker=w1", None).await;
    assert_eq!(progress["qualification"], "failed");

    // A passed worker cannot judge a candidate assigned to someone else.
    qualify(&app, "w0", "positive").await;
    let (_, task) = call(&app, "GET", "/task/next?worker=w0", None).await;
    let (status, _) = call(&app, "GET", "/reports/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let mine = task["candidate_id"].as_str().unwrap();
    let (status, _) = call(&app, "POST", "/judgment", Some(judgment("w0", mine, "positive"))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = call(&app, "POST", "/judgment", Some(judgment("w0", mine, "positive"))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn infeasible_campaign_names_the_constraint() {
    let app = router(Arc::new(AppState::new(None)));
    let mut c = campaign();
    c["config"]["raters_per_item"] = json!(5);
    let (status, body) = call(&app, "POST", "/campaign", Some(c)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("raters_per_item"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let app = router(Arc::new(AppState::new(Some(journal.clone()))));
    call(&app, "POST", "/campaign", Some(campaign())).await;
    for w in ["w0", "w1", "w2", "w3"] {
        qualify(&app, w, "positive").await;
    }
    let mut handles = Vec::new();
    for w in ["w0", "w1", "w2", "w3"] {
        let app = app.clone();
        handles.push(tokio::spawn(async move { work_through(&app, w).await }));
    }
    let mut total = 0;
    for h in handles {
        total += h.await.unwrap();
    }
    assert_eq!(total, 27);
    let lines = std::fs::read_to_string(&journal).unwrap();
    let mut keys: Vec<(String, String)> = lines
        .lines()
        .skip(1)
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["worker_id"].as_str().unwrap().into(), v["candidate_id"].as_str().unwrap().into())
        })
        .collect();
    assert_eq!(keys.len(), 35);
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 35);
}
