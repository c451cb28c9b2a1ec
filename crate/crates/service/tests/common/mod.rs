#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use nerforge::corpus::{Document, EntitySpan, Sentence};
use nerforge::encoder::EncoderConfig;
use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::tagset::TagsetRegistry;
use nerforge::trainer::{train, TrainConfig, TrainCorpus};
use nerforge_service::{router, ModelStore, ServerConfig};

pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            dim: 16,
            buckets: 512,
            ..EncoderConfig::default()
        },
        seed,
        ..ModelConfig::default()
    }
}

/// A flat model over the default registry that tags "John Smith" as PER.
pub fn john_smith_model(name: &str, seed: u64) -> ModelBundle {
    let mut s = Sentence::from_words(&["John", "Smith", "runs", "."]);
    s.flat_spans = vec![EntitySpan::new(0, 2, "PER")];
    let docs = vec![Document::new("d", vec![s])];
    let corpus = TrainCorpus::new("toy", Some("conll"), docs);
    let model = ModelBundle::new_flat(name, TagsetRegistry::default_registry(), small_config(seed)).unwrap();
    let config = TrainConfig {
        epochs: 30,
        batch_size: 1,
        peak_learning_rate: 5e-2,
        ..TrainConfig::flat()
    };
    let outcome = train(&config, model, std::slice::from_ref(&corpus), std::slice::from_ref(&corpus)).unwrap();
    outcome.best.with_languages(vec!["en".to_string()])
}

pub async fn spawn(store: Arc<ModelStore>, config: ServerConfig) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(store, config)).await.unwrap();
    });
    addr
}
