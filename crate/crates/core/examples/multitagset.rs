//! One encoder with two flat heads. Each corpus trains only the head of its
//! tagset; at inference the caller picks the tagset. The trained model is
//! saved as a checkpoint and loaded back.
//!
//! ```text
//! cargo run --release -p nerforge --example multitagset -- [checkpoint path]
//! ```

use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::synthetic::FlatGenerator;
use nerforge::tagset::load_registry;
use nerforge::trainer::{train_with, TrainConfig, TrainCorpus};

const TAGSETS: &str = r#"
format_version = 1

[[tagsets]]
name = "news"
etypes = ["PER", "ORG", "LOC", "MISC"]

[[tagsets]]
name = "products"
etypes = ["PROD", "EVENT"]
"#;

fn main() -> nerforge::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "multitagset.ckpt".to_string());
    let registry = load_registry(TAGSETS)?;
    let news = FlatGenerator::new(&["PER", "ORG", "LOC", "MISC"], 0);
    let products = FlatGenerator::new(&["PROD", "EVENT"], 4);
    let train = [
        TrainCorpus::new("news", Some("news"), news.generate(800, 1, "news")),
        TrainCorpus::new("products", Some("products"), products.generate(200, 2, "products")),
    ];
    let dev = [
        TrainCorpus::new("news", Some("news"), news.generate(200, 3, "news-dev")),
        TrainCorpus::new("products", Some("products"), products.generate(200, 4, "products-dev")),
    ];
    for w in nerforge::trainer::sqrt_temperature_weights(&[("news".into(), 800), ("products".into(), 200)])? {
        println!("sampling {:<9} p = {:.3}", w.corpus_id, w.probability);
    }

    let config = TrainConfig {
        epochs: 10,
        peak_learning_rate: 1e-2,
        ..TrainConfig::flat()
    };
    let model = ModelBundle::new_flat("multi", registry, ModelConfig::default())?;
    let outcome = train_with(&config, model, &train, &dev, |e| {
        let scores: Vec<String> = e
            .corpora
            .iter()
            .map(|c| format!("{} {:.3}", c.corpus, c.dev.map_or(0.0, |d| d.f1)))
            .collect();
        println!("epoch {:>2}  loss {:.4}  {}", e.epoch, e.loss, scores.join("  "));
    })?;
    outcome.best.save(&path)?;
    let model = ModelBundle::load(&path)?;
    println!("saved and reloaded {path} (epoch {})", outcome.best_epoch);

    for corpus in &dev {
        let words = corpus.documents[0].sentences[0].words();
        println!("\n{}", words.join(" "));
        for tagset in model.tagset_names() {
            let spans: Vec<String> = model
                .predict_flat(&words, tagset)?
                .iter()
                .map(|s| format!("{} '{}'", s.etype, words[s.start..s.end].join(" ")))
                .collect();
            println!("  {tagset:<9} {}", spans.join(", "));
        }
    }
    Ok(())
}
