//! Plain-text tokenization and sentence splitting as used for raw input.
//!
//! ```text
//! cargo run -p nerforge --example tokenizer -- "Dr. Novák left Praha. He won't return!"
//! ```

use nerforge::tokenize::tokenize_plain;

fn main() {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "John Smith works at Acme Corp. in New York. Prices rose 3.5% in 2023-24! 東京は大きい。大阪も大きい。".to_string()
    });
    for (i, sentence) in tokenize_plain(&text).iter().enumerate() {
        println!("{}: {}", i + 1, sentence.words().join(" | "));
    }
}
