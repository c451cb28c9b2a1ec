//! Trains the nested seq2seq head on generated depth-2 data: a frozen-encoder
//! phase followed by full fine-tuning.
//!
//! ```text
//! cargo run --release -p nerforge --example nested_synthetic -- [frozen] [epochs] [lr]
//! ```

use nerforge::model::{ModelBundle, ModelConfig};
use nerforge::synthetic::NestedGenerator;
use nerforge::trainer::{train_with, TrainConfig, TrainCorpus};

fn main() -> nerforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let frozen_epochs: usize = args.next().map_or(10, |a| a.parse().expect("frozen epochs"));
    let epochs: usize = args.next().map_or(20, |a| a.parse().expect("epochs"));
    let lr: f64 = args.next().map_or(1e-2, |a| a.parse().expect("learning rate"));

    let generator = NestedGenerator::default();
    let train_docs = generator.generate(1600, 1, "train");
    let dev_docs = generator.generate(400, 2, "dev");

    let config = TrainConfig {
        frozen_epochs,
        frozen_learning_rate: lr,
        epochs,
        peak_learning_rate: lr,
        ..TrainConfig::nested()
    };
    let etypes = NestedGenerator::ETYPES.iter().map(|s| s.to_string()).collect();
    let model = ModelBundle::new_nested("synthetic-nested", etypes, ModelConfig::default())?;
    let outcome = train_with(
        &config,
        model,
        &[TrainCorpus::new("synthetic", None, train_docs)],
        &[TrainCorpus::new("synthetic", None, dev_docs)],
        |e| {
            let phase = if e.frozen { "frozen" } else { "tuning" };
            println!("epoch {:>2} {phase}  loss {:.4}  dev F1 {:.4}", e.epoch, e.loss, e.macro_f1)
        },
    )?;
    println!("best epoch {}", outcome.best_epoch);

    let lexicon = &generator.lexicon;
    let sentence = [
        lexicon.fillers[0].clone(),
        format!("{}son", capitalize(&lexicon.stems[0])),
        "Foundation".to_string(),
        lexicon.fillers[1].clone(),
        format!("{}ville", capitalize(&lexicon.stems[1])),
    ];
    let words: Vec<&str> = sentence.iter().map(String::as_str).collect();
    for s in outcome.best.predict_nested(&words)? {
        println!("{s}  {}", words[s.start..s.end].join(" "));
    }
    Ok(())
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
}
