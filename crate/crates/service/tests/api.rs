use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use foilset_core::geometry::parse_coordinates;
use foilset_core::pipeline::run::Engine;
use foilset_core::pipeline::store::{read_events, read_state};
use foilset_service::{router, AppState};

struct Api {
    app: Router,
    root: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let root = tempfile::tempdir().unwrap();
        Self {
            app: router(AppState::new(root.path()).unwrap()),
            root,
        }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, b) = self.call(method, uri, body).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    async fn create(&self, config: Value) -> String {
        let (s, v) = self.json(Method::POST, "/runs", Some(config)).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        check("created", &v);
        v["id"].as_str().unwrap().to_string()
    }

    async fn advance_to_review(&self, id: &str) {
        loop {
            let (s, v) = self
                .json(Method::POST, &format!("/runs/{id}/advance?wait=true"), None)
                .await;
            assert_eq!(s, StatusCode::OK, "{v}");
            check("step_summary", &v);
            if v["status"] != "ready" {
                assert_eq!(v["status"], "awaiting_review");
                return;
            }
        }
    }

    fn run_dir(&self, id: &str) -> std::path::PathBuf {
        self.root.path().join(id)
    }
}

fn check(schema: &str, value: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{schema}.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "payload violates {}: {errors:#?}", schema["title"]);
}

fn small() -> Value {
    json!({"seed": 42, "n_initial": 192})
}

#[tokio::test(flavor = "multi_thread")]
async fn review_loop_round_trip() {
    let api = Api::new();
    let (s, v) = api.json(Method::POST, "/runs", Some(json!({"n_initial": 0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    check("error", &v);
    let (s, _) = api.call(Method::POST, "/runs", Some(json!("not a config"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let id = api.create(small()).await;
    let (s, v) = api.json(Method::GET, "/runs", None).await;
    assert_eq!(s, StatusCode::OK);
    check("run_list", &v);
    let (s, v) = api.json(Method::GET, &format!("/runs/{id}/sensitivity"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    check("error", &v);

    api.advance_to_review(&id).await;
    let (s, v) = api.json(Method::POST, &format!("/runs/{id}/advance"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "advance while awaiting review");
    check("error", &v);

    let (s, state) = api.json(Method::GET, &format!("/runs/{id}/state"), None).await;
    assert_eq!(s, StatusCode::OK);
    check("state", &state);
    let queue: Vec<String> = state["review_queue"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().into())
        .collect();
    assert!(queue.len() >= 2);

    let (s, list) = api.json(Method::GET, &format!("/runs/{id}/candidates"), None).await;
    assert_eq!(s, StatusCode::OK);
    check("candidate_list", &list);
    let (s, stage2) = api
        .json(Method::GET, &format!("/runs/{id}/candidates?stage=2"), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    check("candidate_list", &stage2);
    assert_eq!(
        api.call(Method::GET, &format!("/runs/{id}/candidates?stage=99"), None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        api.call(Method::GET, &format!("/runs/{id}/candidates?stage=x"), None)
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    let (s, detail) = api
        .json(Method::GET, &format!("/runs/{id}/candidates/{}", queue[0]), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    check("candidate_detail", &detail);
    assert!(detail["cp"].is_array() && detail["pca"].is_array() && detail["rating"].is_object());

    let events_before = read_events(&api.run_dir(&id)).unwrap().len();
    let unknown = json!({"candidate": "ID-999999", "verdict": "valid"});
    let (s, v) = api
        .json(Method::POST, &format!("/runs/{id}/decisions"), Some(unknown))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    check("error", &v);
    let bad = json!({"candidate": queue[0], "verdict": "maybe"});
    assert_eq!(
        api.call(Method::POST, &format!("/runs/{id}/decisions"), Some(bad))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    let bad_param = json!({"candidate": queue[0], "verdict": "invalid",
        "directives": [{"param": "CST_Q7", "direction": "increase"}]});
    assert_eq!(
        api.call(Method::POST, &format!("/runs/{id}/decisions"), Some(bad_param))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        read_events(&api.run_dir(&id)).unwrap().len(),
        events_before,
        "rejected requests must not log"
    );

    let d0 = json!({"candidate": queue[0], "verdict": "invalid", "note": "reject", "actor": "manager"});
    let (s, r) = api.json(Method::POST, &format!("/runs/{id}/decisions"), Some(d0)).await;
    assert_eq!(s, StatusCode::CREATED);
    check("decision_receipt", &r);
    let (_, detail) = api
        .json(Method::GET, &format!("/runs/{id}/candidates/{}", queue[0]), None)
        .await;
    assert_eq!(detail["status"], "invalid");
    assert_eq!(detail["verdict"]["valid"], false);

    let d1 = json!({"candidate": queue[1], "verdict": "invalid",
        "directives": [{"param": "CST_L3", "direction": "increase", "magnitude": 0.05}]});
    assert_eq!(
        api.call(Method::POST, &format!("/runs/{id}/decisions"), Some(d1))
            .await
            .0,
        StatusCode::CREATED
    );
    assert_eq!(read_events(&api.run_dir(&id)).unwrap().len(), events_before + 2);

    let (s, dat) = api
        .call(
            Method::GET,
            &format!("/runs/{id}/candidates/{}/geometry.dat", queue[1]),
            None,
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let (_, pts) = parse_coordinates(std::str::from_utf8(&dat).unwrap()).unwrap();
    let outline = detail["outline"].as_array().unwrap().len();
    assert_eq!(pts.len(), outline);
    let (s, obj) = api
        .call(
            Method::GET,
            &format!("/runs/{id}/candidates/{}/geometry.obj", queue[1]),
            None,
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let verts = std::str::from_utf8(&obj)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("v "))
        .count();
    assert_eq!(verts, 2 * outline);

    let (s, step) = api.json(Method::POST, &format!("/runs/{id}/iterate"), None).await;
    assert_eq!(s, StatusCode::OK, "{step}");
    check("step_summary", &step);
    let (_, state) = api.json(Method::GET, &format!("/runs/{id}/state"), None).await;
    assert!(!state["review_queue"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v == &json!(queue[0])));
    let removed = &queue[0];
    assert_eq!(
        api.call(
            Method::GET,
            &format!("/runs/{id}/candidates/{removed}/geometry.dat"),
            None
        )
        .await
        .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        api.call(Method::GET, &format!("/runs/{id}/candidates/{removed}"), None)
            .await
            .0,
        StatusCode::OK
    );

    let (s, step) = api.json(Method::POST, &format!("/runs/{id}/converge"), None).await;
    assert_eq!(s, StatusCode::OK);
    check("step_summary", &step);
    assert_eq!(
        api.call(Method::POST, &format!("/runs/{id}/iterate"), None).await.0,
        StatusCode::CONFLICT
    );

    let (s, report) = api.json(Method::GET, &format!("/runs/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    check("report", &report);
    let (s, md) = api
        .call(Method::GET, &format!("/runs/{id}/report?format=md"), None)
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(md, std::fs::read(api.run_dir(&id).join("report.md")).unwrap());
    let (s, sens) = api.json(Method::GET, &format!("/runs/{id}/sensitivity"), None).await;
    assert_eq!(s, StatusCode::OK);
    check("sensitivity", &sens);

    // Replaying the log reproduces the served state.
    let events = read_events(&api.run_dir(&id)).unwrap();
    let replayed = Engine::replay(&events).unwrap();
    assert_eq!(replayed.state, read_state(&api.run_dir(&id)).unwrap());
    let (_, served) = api.json(Method::GET, &format!("/runs/{id}/state"), None).await;
    assert_eq!(served["log"], serde_json::to_value(&replayed.state.log).unwrap());
    assert_eq!(served["status"], "converged");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_advance_has_one_winner() {
    let api = Api::new();
    let id = api.create(small()).await;
    let uri = format!("/runs/{id}/advance");
    let (a, b) = tokio::join!(api.json(Method::POST, &uri, None), api.json(Method::POST, &uri, None));
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::ACCEPTED, StatusCode::CONFLICT]);
    let winner = if a.0 == StatusCode::ACCEPTED { a.1 } else { b.1 };
    check("accepted", &winner);
    loop {
        let (_, st) = api.json(Method::GET, &format!("/runs/{id}/state"), None).await;
        if st["busy"] == false {
            check("state", &st);
            assert_eq!(st["log"].as_array().unwrap().len(), 2, "exactly one advance logged");
            assert_eq!(st["last_summary"]["event"], "advance:generate");
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn unknown_runs_are_404() {
    let api = Api::new();
    for (m, uri) in [
        (Method::GET, "/runs/run-0042/state"),
        (Method::POST, "/runs/run-0042/advance"),
        (Method::POST, "/runs/run-0042/iterate"),
        (Method::GET, "/runs/run-0042/report"),
        (Method::GET, "/runs/..%2Fx/state"),
    ] {
        let (s, v) = api.json(m, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        check("error", &v);
    }
}
