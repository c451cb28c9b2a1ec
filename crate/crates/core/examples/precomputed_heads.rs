//! Training heads on stored token embeddings. The encoder is never run for
//! corpora that carry precomputed vectors, so only head parameters change.
//!
//! ```text
//! cargo run --release -p nerforge --example precomputed_heads -- [embeddings path]
//! ```

use std::sync::Arc;

use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::precomputed::{load_precomputed, PrecomputedEmbeddings};
use nerforge::synthetic::FlatGenerator;
use nerforge::tagset::{Tagset, TagsetRegistry};
use nerforge::trainer::{train, TrainConfig, TrainCorpus};

fn main() -> nerforge::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "synthetic.emb".to_string());
    let generator = FlatGenerator::new(&["PER", "ORG"], 0);
    let registry = TagsetRegistry::new(vec![Tagset::new("pair", vec!["PER".into(), "ORG".into()])?])?;
    let quick = |epochs: usize, lr: f64| TrainConfig {
        epochs,
        peak_learning_rate: lr,
        ..TrainConfig::flat()
    };

    // Stand-in for an upstream encoder: a model trained briefly on other data.
    let upstream = TrainCorpus::new("upstream", Some("pair"), generator.generate(1600, 7, "up"));
    let fresh = ModelBundle::new_flat("heads", registry.clone(), ModelConfig::default())?;
    let upstream = train(&quick(6, 1e-2), fresh.clone(), std::slice::from_ref(&upstream), std::slice::from_ref(&upstream))?.best;

    let docs = generator.generate(400, 1, "emb");
    let mut store = PrecomputedEmbeddings::new(upstream.config.encoder.dim);
    for doc in &docs {
        for (i, sentence) in doc.sentences.iter().enumerate() {
            store.insert(doc.id.clone(), i, upstream.embed(&sentence.words()).vectors)?;
        }
    }
    store.save(&path)?;
    let store = Arc::new(load_precomputed(&path)?);
    println!("{} sentences of width {} stored in {path}", store.len(), store.width());

    // Fresh heads on top of the upstream encoder.
    let model = ModelBundle {
        encoder: upstream.encoder.clone(),
        ..fresh
    };
    let (train_docs, dev_docs) = docs.split_at(16);
    let corpus = |d: &[nerforge::corpus::Document]| {
        TrainCorpus::new("emb", Some("pair"), d.to_vec()).with_embeddings(store.clone())
    };
    let outcome = train(&quick(10, 2e-2), model.clone(), &[corpus(train_docs)], &[corpus(dev_docs)])?;
    for e in &outcome.history.epochs {
        println!("epoch {}  loss {:.4}  dev F1 {:.4}", e.epoch, e.loss, e.macro_f1);
    }
    println!("encoder unchanged: {}", outcome.best.encoder == model.encoder);
    Ok(())
}
