//! Writes generated flat and nested corpora in the on-disk formats the CLI
//! reads. The configurations in `configs/` point at this output.
//!
//! ```text
//! cargo run -p nerforge --example synthetic_corpora -- [out dir, default data]
//! ```

use std::fs;
use std::path::PathBuf;

use nerforge::corpus::{write_flat_corpus, write_nested, ColumnOrder, Document};
use nerforge::synthetic::{FlatGenerator, NestedGenerator};

fn nested_corpus(docs: &[Document]) -> nerforge::Result<String> {
    docs.iter().map(write_nested).collect()
}

fn main() -> nerforge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".to_string()));
    fs::create_dir_all(&out)?;
    let write = |name: &str, text: String| -> nerforge::Result<()> {
        fs::write(out.join(name), text)?;
        println!("wrote {}", out.join(name).display());
        Ok(())
    };

    let news = FlatGenerator::new(&["PER", "ORG", "LOC", "MISC"], 0);
    write("news.train.conll", write_flat_corpus(&news.generate(1600, 1, "news"), ColumnOrder::TokenLabel)?)?;
    write("news.dev.conll", write_flat_corpus(&news.generate(400, 2, "news-dev"), ColumnOrder::TokenLabel)?)?;
    let products = FlatGenerator::new(&["PROD", "EVENT"], 4);
    write("products.train.conll", write_flat_corpus(&products.generate(400, 3, "prod"), ColumnOrder::LabelToken)?)?;
    write("products.dev.conll", write_flat_corpus(&products.generate(200, 4, "prod-dev"), ColumnOrder::LabelToken)?)?;

    let nested = NestedGenerator::default();
    write("nested.train.txt", nested_corpus(&nested.generate(1600, 5, "nested"))?)?;
    write("nested.dev.txt", nested_corpus(&nested.generate(400, 6, "nested-dev"))?)?;
    Ok(())
}
