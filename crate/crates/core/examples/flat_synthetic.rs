//! Trains a flat model on a generated corpus and prints per-epoch dev scores.
//!
//! ```text
//! cargo run --release -p nerforge --example flat_synthetic -- [epochs] [lr]
//! ```

use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::synthetic::FlatGenerator;
use nerforge::tagset::{Tagset, TagsetRegistry};
use nerforge::trainer::{train_with, TrainConfig, TrainCorpus};

fn main() -> nerforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |a| a.parse().expect("epochs"));
    let lr: f64 = args.next().map_or(1e-2, |a| a.parse().expect("learning rate"));

    let etypes = ["PER", "ORG", "LOC", "MISC"];
    let registry = TagsetRegistry::new(vec![Tagset::new("conll", etypes.iter().map(|s| s.to_string()).collect())?])?;
    let generator = FlatGenerator::new(&etypes, 0);
    let train_docs = generator.generate(1600, 1, "train");
    let dev_docs = generator.generate(400, 2, "dev");

    let config = TrainConfig {
        epochs,
        peak_learning_rate: lr,
        ..TrainConfig::flat()
    };
    let model = ModelBundle::new_flat("synthetic-flat", registry, ModelConfig::default())?;
    let outcome = train_with(
        &config,
        model,
        &[TrainCorpus::new("synthetic", Some("conll"), train_docs)],
        &[TrainCorpus::new("synthetic", Some("conll"), dev_docs)],
        |e| println!("epoch {:>2}  loss {:.4}  dev F1 {:.4}", e.epoch, e.loss, e.macro_f1),
    )?;
    println!("best epoch {}", outcome.best_epoch);

    let lexicon = &generator.lexicon;
    let entity = |i: usize, suffix: &str| {
        let stem = &lexicon.stems[i];
        format!("{}{}{suffix}", stem[..1].to_uppercase(), &stem[1..])
    };
    let sentence = [
        lexicon.fillers[0].clone(),
        entity(0, "son"),
        entity(1, "son"),
        lexicon.fillers[1].clone(),
        entity(2, "corp"),
    ];
    let words: Vec<&str> = sentence.iter().map(String::as_str).collect();
    for s in outcome.best.predict_flat(&words, "conll")? {
        println!("{s}  {}", words[s.start..s.end].join(" "));
    }
    Ok(())
}
