mod common;

use std::sync::Arc;

use nerforge::corpus::{write_flat_conll, ColumnOrder, Document};
use nerforge::model::ModelBundle;
use nerforge::tokenize::tokenize_plain;
use nerforge_service::api::{ModelInfo, RecognizeResponse};
use nerforge_service::server::ReloadResponse;
use nerforge_service::{ModelStore, ServerConfig};
use reqwest::StatusCode;
use serde_json::json;

use common::{john_smith_model, spawn};

async fn post(addr: std::net::SocketAddr, body: serde_json::Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("http://{addr}/recognize"))
        .json(&body)
        .send()
        .await
        .unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn recognize_formats() {
    let store = Arc::new(ModelStore::from_models(vec![john_smith_model("en", 1)]).unwrap());
    let addr = spawn(store, ServerConfig::default()).await;

    let vertical = post(addr, json!({"data": "John Smith runs .", "model": "en", "tagset": "conll", "output": "vertical"})).await;
    assert_eq!(vertical.status(), StatusCode::OK);
    assert!(vertical.headers()["content-type"].to_str().unwrap().starts_with("text/plain"));
    assert_eq!(vertical.text().await.unwrap(), "1,2\tPER\tJohn Smith\n");

    let response: RecognizeResponse = post(addr, json!({"data": "John Smith runs .", "model": "en", "tagset": "conll"}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(response.model, "en");
    assert_eq!(response.tagset, "conll");
    assert_eq!(response.sentences.len(), 1);
    let span = &response.sentences[0].spans[0];
    assert_eq!((span.start, span.end, span.etype.as_str(), span.text.as_str()), (0, 2, "PER", "John Smith"));

    let conll = post(addr, json!({"data": "John\nSmith\nruns\n.\n", "model": "en", "tagset": "conll", "input": "conll", "output": "conll"}))
        .await
        .text()
        .await
        .unwrap();
    let mut sentences = tokenize_plain("John Smith runs .");
    sentences[0].flat_spans = vec![nerforge::corpus::EntitySpan::new(0, 2, "PER")];
    assert_eq!(conll, write_flat_conll(&Document::new("x", sentences), ColumnOrder::TokenLabel).unwrap());

    let empty: RecognizeResponse = post(addr, json!({"data": "", "model": "en", "tagset": "conll"})).await.json().await.unwrap();
    assert!(empty.sentences.is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn recognize_errors() {
    let store = Arc::new(ModelStore::from_models(vec![john_smith_model("en", 1)]).unwrap());
    let config = ServerConfig {
        max_body_bytes: 4096,
        ..ServerConfig::default()
    };
    let addr = spawn(store, config).await;

    let r = post(addr, json!({"data": "x", "model": "missing", "tagset": "conll"})).await;
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let body: serde_json::Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("missing"));

    assert_eq!(post(addr, json!({"data": "x", "model": "en", "tagset": "nope"})).await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(post(addr, json!({"data": "x", "model": "en"})).await.status(), StatusCode::BAD_REQUEST);

    let big = "word ".repeat(2000);
    assert_eq!(post(addr, json!({"data": big, "model": "en", "tagset": "conll"})).await.status(), StatusCode::PAYLOAD_TOO_LARGE);

    let bad = reqwest::Client::new()
        .post(format!("http://{addr}/recognize"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert!(bad.status().is_client_error());

    let reload = reqwest::Client::new().post(format!("http://{addr}/admin/reload")).send().await.unwrap();
    assert_eq!(reload.status(), StatusCode::INTERNAL_SERVER_ERROR);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn model_listing_and_index() {
    let addr = spawn(Arc::new(ModelStore::default()), ServerConfig::default()).await;
    let empty: Vec<ModelInfo> = reqwest::get(format!("http://{addr}/models")).await.unwrap().json().await.unwrap();
    assert!(empty.is_empty());

    let store = Arc::new(ModelStore::from_models(vec![john_smith_model("en", 1)]).unwrap());
    let addr = spawn(store, ServerConfig::default()).await;
    let first = reqwest::get(format!("http://{addr}/models")).await.unwrap().text().await.unwrap();
    let second = reqwest::get(format!("http://{addr}/models")).await.unwrap().text().await.unwrap();
    assert_eq!(first, second);
    let models: Vec<ModelInfo> = serde_json::from_str(&first).unwrap();
    assert_eq!(models.len(), 1);
    let mut tagsets = models[0].tagsets.clone();
    tagsets.sort();
    assert_eq!(tagsets, ["conll", "onto", "uner"]);
    assert_eq!(models[0].languages, ["en"]);
    let raw: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(raw[0]["type"], "flat");

    let index = reqwest::get(format!("http://{addr}/")).await.unwrap();
    assert!(index.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
}

/// Requests racing a reload see either the old or the new model for the
/// whole request, never a mix.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reload_swaps_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nf");
    let old = john_smith_model("m", 1);
    let new = ModelBundle { languages: vec!["cs".into()], ..john_smith_model("m", 2) };
    old.save(&path).unwrap();
    let store = Arc::new(ModelStore::open(vec![path.clone()]).unwrap());
    let addr = spawn(store, ServerConfig::default()).await;

    let text = "John Smith runs . Mary Jones said so . Ships sail north .".repeat(20);
    let request = json!({"data": text, "model": "m", "tagset": "conll"});
    let expect = |m: &ModelBundle| {
        let words: Vec<Vec<String>> = tokenize_plain(&text).iter().map(|s| s.words().iter().map(|w| w.to_string()).collect()).collect();
        words
            .iter()
            .map(|w| m.predict_flat(&w.iter().map(String::as_str).collect::<Vec<_>>(), "conll").unwrap())
            .collect::<Vec<_>>()
    };
    let (old_spans, new_spans) = (expect(&old), expect(&new));
    assert_ne!(old_spans, new_spans, "models must be distinguishable");

    let mut tasks = tokio::task::JoinSet::new();
    for _ in 0..40 {
        let body = request.clone();
        tasks.spawn(async move {
            let r: RecognizeResponse = post(addr, body).await.json().await.unwrap();
            r.spans()
        });
    }
    new.save(&path).unwrap();
    let reload: ReloadResponse = reqwest::Client::new()
        .post(format!("http://{addr}/admin/reload"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(reload.generation, 1);
    assert_eq!(reload.models, ["m"]);
    while let Some(spans) = tasks.join_next().await {
        let spans = spans.unwrap();
        assert!(spans == old_spans || spans == new_spans);
    }
    let after: RecognizeResponse = post(addr, request).await.json().await.unwrap();
    assert_eq!(after.spans(), new_spans);
    let models: Vec<ModelInfo> = reqwest::get(format!("http://{addr}/models")).await.unwrap().json().await.unwrap();
    assert_eq!(models[0].languages, ["cs"]);
}
