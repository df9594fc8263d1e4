use std::io::{Read, Write};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use smartreply::config::EngineConfig;
use smartreply::encoder::{Dims, EncoderParams};
use smartreply::responseset::{ResponseSet, ResponseSetConfig};
use smartreply::service::{router, AppState, Engine};
use smartreply::synthetic::{separable_corpus, SeparableSpec};
use smartreply::trainer::corpus_vocab;
use smartreply::RankConfig;

fn engine(rank: RankConfig) -> Engine {
    let spec = SeparableSpec {
        n_replies: 40,
        messages_per_reply: 2,
        ..Default::default()
    };
    let mut corpus = separable_corpus(spec, 3, "s");
    corpus.push(smartreply::MRPair::en("x", "want pizza tonight ?", "sounds good !"));
    corpus.push(smartreply::MRPair::en("y", "want pizza tonight ?", "sounds good"));
    let vocab = corpus_vocab(&corpus, 1);
    let params = EncoderParams::init(vocab.len(), Dims { d_emb: 16, d_hid: 16, d_out: 8 }, 4);
    let rset = ResponseSet::build(&corpus, &params, &vocab, &ResponseSetConfig { k_intents: 4, ..Default::default() }).unwrap();
    Engine::new(params, vocab, rset, rank, "fixture-model".into()).unwrap()
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_owned())).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn ask(text: &str, n: Option<usize>) -> String {
    let mut v = json!({ "conversation": [
        { "sender": "me", "text": "hi" },
        { "sender": "other", "text": text },
    ]});
    if let Some(n) = n {
        v["n"] = json!(n);
    }
    v.to_string()
}

#[tokio::test]
async fn suggest_contract() {
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    let (status, body) = call(&app, "POST", "/api/suggest", Some(&ask("want pizza tonight?", None))).await;
    assert_eq!(status, StatusCode::OK);
    let list = body["suggestions"].as_array().unwrap();
    assert!(!list.is_empty() && list.len() <= 3);
    for w in list.windows(2) {
        assert!(w[0]["score"].as_f64().unwrap() > w[1]["score"].as_f64().unwrap());
    }
    assert_eq!(body["model_id"], "fixture-model");
    assert!(body["elapsed_ms"].as_f64().unwrap() >= 0.0);

    let (_, one) = call(&app, "POST", "/api/suggest", Some(&ask("want pizza tonight?", Some(1)))).await;
    assert_eq!(one["suggestions"].as_array().unwrap().len(), 1);

    let (_, again) = call(&app, "POST", "/api/suggest", Some(&ask("want pizza tonight?", None))).await;
    assert_eq!(again["suggestions"], body["suggestions"]);
}

#[tokio::test]
async fn suggest_rejects_bad_requests() {
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    let bad = [
        json!({ "conversation": [] }).to_string(),
        json!({ "conversation": [{ "sender": "other", "text": "hi" }, { "sender": "me", "text": "yo" }] }).to_string(),
        json!({ "conversation": [{ "sender": "stranger", "text": "hi" }] }).to_string(),
        ask("hi", Some(0)),
        ask("hi", Some(4)),
        ask("   ", None),
        "{not json".to_owned(),
    ];
    for body in bad {
        let (status, v) = call(&app, "POST", "/api/suggest", Some(&body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn unloaded_service_answers_503() {
    let state = AppState::empty(RankConfig::default());
    let app = router(state.clone(), None);
    assert_eq!(call(&app, "GET", "/api/health", None).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(call(&app, "POST", "/api/suggest", Some(&ask("hi", None))).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(call(&app, "GET", "/api/config", None).await.0, StatusCode::OK);

    let e = engine(RankConfig::default());
    let size = e.rset.len();
    assert!(state.install(e));
    assert!(!state.install(engine(RankConfig::default())));
    let (status, health) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["model_id"], "fixture-model");
    assert_eq!(health["response_set_size"], size);
}

#[tokio::test]
async fn config_echo() {
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    let (_, v) = call(&app, "GET", "/api/config", None).await;
    assert_eq!((v["alpha"].as_f64(), v["n1"].as_u64(), v["n2"].as_u64()), (Some(0.3), Some(30), Some(3)));
    assert_eq!(v["jaccard_threshold"], 0.5);
    assert_eq!(v["k_intents"], 4);
    assert_eq!(v["dims"]["d_out"], 8);

    let cfg = EngineConfig::parse("alpha = 0.75\nn2 = 2\n").unwrap();
    let app = router(AppState::loaded(engine(cfg.rank)), None);
    let (_, v) = call(&app, "GET", "/api/config", None).await;
    assert_eq!((v["alpha"].as_f64(), v["n2"].as_u64()), (Some(0.75), Some(2)));
}

#[tokio::test]
async fn unknown_routes_are_404() {
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    assert_eq!(call(&app, "GET", "/api/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/elsewhere", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/suggest", None).await.0, StatusCode::METHOD_NOT_ALLOWED);
}

#[tokio::test]
async fn cors_allows_only_local_origins() {
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    for (origin, allowed) in [("http://localhost:5173", true), ("http://127.0.0.1", true), ("https://example.com", false)] {
        let req = Request::get("/api/config").header(header::ORIGIN, origin).body(Body::empty()).unwrap();
        let res = app.clone().oneshot(req).await.unwrap();
        let echoed = res.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).map(|v| v.to_str().unwrap().to_owned());
        assert_eq!(echoed.as_deref() == Some(origin), allowed, "{origin}");
    }
}

#[tokio::test]
async fn serves_ui_bundle_when_present() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>chat</title>").unwrap();
    let app = router(AppState::loaded(engine(RankConfig::default())), Some(dir.path().to_owned()));
    let res = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    assert!(bytes.starts_with(b"<!doctype html>"));
    assert_eq!(call(&app, "GET", "/api/health", None).await.0, StatusCode::OK);
}

fn raw_post(addr: std::net::SocketAddr, path: &str, body: &str) -> (u16, Value) {
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "POST {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, payload) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, serde_json::from_str(payload).unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_identical_requests_agree() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(AppState::loaded(engine(RankConfig::default())), None);
    let server = tokio::spawn(smartreply::service::serve(listener, app));

    let body = ask("want pizza tonight?", None);
    let results = tokio::task::spawn_blocking(move || {
        let handles: Vec<_> = (0..16)
            .map(|_| {
                let body = body.clone();
                std::thread::spawn(move || raw_post(addr, "/api/suggest", &body))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    })
    .await
    .unwrap();
    server.abort();

    assert_eq!(results.len(), 16);
    for (status, v) in &results {
        assert_eq!(*status, 200);
        assert_eq!(v["suggestions"], results[0].1["suggestions"]);
        assert_eq!(v["model_id"], "fixture-model");
    }
}
