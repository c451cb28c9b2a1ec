//! Serves a freshly trained model on a local port and talks to it: lists the
//! models and annotates plain text in all three output formats.
//!
//! ```text
//! cargo run --release -p nerforge-service --example http_client
//! ```

use std::sync::Arc;

use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::synthetic::FlatGenerator;
use nerforge::tagset::{Tagset, TagsetRegistry};
use nerforge::trainer::{train, TrainConfig, TrainCorpus};
use nerforge_service::server::serve;
use nerforge_service::{router, ModelStore, ServerConfig};
use serde_json::json;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let generator = FlatGenerator::new(&["PER", "ORG"], 0);
    let registry = TagsetRegistry::new(vec![Tagset::new("pair", vec!["PER".into(), "ORG".into()])?])?;
    let corpus = TrainCorpus::new("pair", Some("pair"), generator.generate(400, 1, "pair"));
    let config = TrainConfig {
        epochs: 5,
        peak_learning_rate: 1e-2,
        ..TrainConfig::flat()
    };
    let model = ModelBundle::new_flat("demo", registry, ModelConfig::default())?.with_languages(vec!["en".into()]);
    let model = train(&config, model, std::slice::from_ref(&corpus), std::slice::from_ref(&corpus))?.best;

    let store = Arc::new(ModelStore::from_models(vec![model])?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(serve(listener, router(store, ServerConfig::default())));
    println!("serving on {base}");

    let client = reqwest::Client::new();
    let models: serde_json::Value = client.get(format!("{base}/models")).send().await?.json().await?;
    println!("GET /models\n{}\n", serde_json::to_string_pretty(&models)?);

    let stem = |i: usize, suffix: &str| {
        let s = &generator.lexicon.stems[i];
        format!("{}{}{suffix}", s[..1].to_uppercase(), &s[1..])
    };
    let text = format!("{} {} met {} today.", stem(3, "son"), stem(4, "son"), stem(5, "corp"));
    for output in ["json", "conll", "vertical"] {
        let body = json!({"data": text, "model": "demo", "tagset": "pair", "output": output});
        let response = client.post(format!("{base}/recognize")).json(&body).send().await?;
        println!("POST /recognize output={output} -> {}\n{}\n", response.status(), response.text().await?);
    }

    let missing = client
        .post(format!("{base}/recognize"))
        .json(&json!({"data": text, "model": "nope", "tagset": "pair"}))
        .send()
        .await?;
    println!("unknown model -> {} {}", missing.status(), missing.text().await?);
    Ok(())
}
